//! Exact k-nearest-neighbor search and the symmetric kNN graph.
//!
//! Two search routes exist: a brute-force scan (the reference) and a k-d tree.
//! Both compare squared Euclidean distances accumulated in `f64` with the same
//! axis order and break ties by ascending sample index, so their outputs are
//! bit-identical; the tree only prunes subtrees whose single-axis bound
//! already exceeds the current worst candidate, which is conservative under
//! floating-point rounding. Reported distances are true Euclidean.
//!
//! The graph uses the neighbor-union rule: `{i, j}` is an edge when `j` is
//! among `i`'s k nearest or `i` is among `j`'s.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dataset::FeaturesView;
use crate::error::{Error, Result};
use crate::par;

/// Which search implementation to run. `Auto` picks the tree in low dimension
/// where it wins and the scan elsewhere; results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchStrategy {
    #[default]
    Auto,
    BruteForce,
    KdTree,
}

/// kNN lists for a set of query points. Row `r` belongs to sample
/// `queries[r]`; neighbor ids are original sample indices, sorted by
/// `(distance, index)` ascending.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    queries: Vec<usize>,
    neighbors: Vec<usize>,
    distances: Vec<f64>,
    k: usize,
    n_total: usize,
}

impl NeighborTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn queries(&self) -> &[usize] {
        &self.queries
    }

    /// Neighbor indices of row `r`.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.neighbors[r * self.k..(r + 1) * self.k]
    }

    /// Euclidean distances matching `row(r)`.
    pub fn row_distances(&self, r: usize) -> &[f64] {
        &self.distances[r * self.k..(r + 1) * self.k]
    }
}

#[inline]
fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let diff = *x as f64 - *y as f64;
        acc += diff * diff;
    }
    acc
}

/// Heap entry ordered by `(d2, idx)`; the heap max is the current worst.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    idx: usize,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .partial_cmp(&other.d2)
            .expect("distances are finite")
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct KBest {
    heap: BinaryHeap<Cand>,
    k: usize,
}

impl KBest {
    fn new(k: usize) -> Self {
        KBest {
            heap: BinaryHeap::with_capacity(k + 1),
            k,
        }
    }

    #[inline]
    fn offer(&mut self, cand: Cand) {
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if cand < *self.heap.peek().expect("non-empty") {
            self.heap.pop();
            self.heap.push(cand);
        }
    }

    /// Current worst kept candidate, if the heap is full.
    #[inline]
    fn worst(&self) -> Option<Cand> {
        if self.heap.len() == self.k {
            self.heap.peek().copied()
        } else {
            None
        }
    }

    fn into_sorted(self) -> Vec<Cand> {
        let mut v = self.heap.into_vec();
        v.sort_unstable();
        v
    }
}

fn check_index_set(set: &[usize], n: usize, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Invalid(format!("{what} set is empty")));
    }
    for w in set.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Invalid(format!(
                "{what} set must be sorted and unique (saw {} then {})",
                w[0], w[1]
            )));
        }
    }
    if *set.last().unwrap() >= n {
        return Err(Error::Invalid(format!(
            "{what} index {} out of range for {n} samples",
            set.last().unwrap()
        )));
    }
    Ok(())
}

fn scan_query(view: FeaturesView<'_>, pool: &[usize], q: usize, k: usize) -> Vec<Cand> {
    let qrow = view.row(q);
    let mut best = KBest::new(k);
    for &p in pool {
        if p == q {
            continue;
        }
        best.offer(Cand {
            d2: squared_distance(qrow, view.row(p)),
            idx: p,
        });
    }
    best.into_sorted()
}

/// Balanced k-d tree over a fixed candidate pool. One point per node; splits
/// cycle through axes; each node's left subtree holds coordinates `<=` its
/// own on the split axis and the right subtree holds `>=` (ties are resolved
/// by index during construction, which the search never relies on).
struct KdTree<'a> {
    view: FeaturesView<'a>,
    points: Vec<u32>,
    axes: Vec<u16>,
    left: Vec<i32>,
    right: Vec<i32>,
    root: i32,
}

impl<'a> KdTree<'a> {
    fn build(view: FeaturesView<'a>, pool: &[usize]) -> Self {
        let mut idx: Vec<u32> = pool.iter().map(|&p| p as u32).collect();
        let cap = idx.len();
        let mut tree = KdTree {
            view,
            points: Vec::with_capacity(cap),
            axes: Vec::with_capacity(cap),
            left: Vec::with_capacity(cap),
            right: Vec::with_capacity(cap),
            root: -1,
        };
        let d = view.d;
        tree.root = tree.build_rec(&mut idx, 0, d);
        tree
    }

    fn build_rec(&mut self, idx: &mut [u32], depth: usize, d: usize) -> i32 {
        if idx.is_empty() {
            return -1;
        }
        let axis = depth % d;
        let mid = idx.len() / 2;
        let view = self.view;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            view.row(a as usize)[axis]
                .partial_cmp(&view.row(b as usize)[axis])
                .expect("features are finite")
                .then(a.cmp(&b))
        });
        let node = self.points.len() as i32;
        self.points.push(idx[mid]);
        self.axes.push(axis as u16);
        self.left.push(-1);
        self.right.push(-1);
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let l = self.build_rec(lo, depth + 1, d);
        let r = self.build_rec(hi, depth + 1, d);
        self.left[node as usize] = l;
        self.right[node as usize] = r;
        node
    }

    fn search(&self, q: usize, k: usize) -> Vec<Cand> {
        let qrow = self.view.row(q);
        let mut best = KBest::new(k);
        self.search_rec(self.root, qrow, q, &mut best);
        best.into_sorted()
    }

    fn search_rec(&self, node: i32, qrow: &[f32], q: usize, best: &mut KBest) {
        if node < 0 {
            return;
        }
        let node = node as usize;
        let p = self.points[node] as usize;
        if p != q {
            best.offer(Cand {
                d2: squared_distance(qrow, self.view.row(p)),
                idx: p,
            });
        }
        let axis = self.axes[node] as usize;
        let diff = qrow[axis] as f64 - self.view.row(p)[axis] as f64;
        let (near, far) = if diff < 0.0 {
            (self.left[node], self.right[node])
        } else {
            (self.right[node], self.left[node])
        };
        self.search_rec(near, qrow, q, best);
        // Every far-side point differs from the query by at least |diff| on
        // this axis, so its squared distance is at least diff^2. Visit unless
        // that bound strictly exceeds the current worst (non-strict keeps
        // index-tied candidates reachable).
        let bound = diff * diff;
        let must_visit = match best.worst() {
            None => true,
            Some(w) => bound <= w.d2,
        };
        if must_visit {
            self.search_rec(far, qrow, q, best);
        }
    }
}

fn run_search(
    view: FeaturesView<'_>,
    k: usize,
    queries: &[usize],
    pool: &[usize],
    strategy: SearchStrategy,
) -> NeighborTable {
    let use_tree = match strategy {
        SearchStrategy::BruteForce => false,
        SearchStrategy::KdTree => true,
        SearchStrategy::Auto => view.d <= 16 && pool.len() >= 128,
    };
    let tree = if use_tree {
        Some(KdTree::build(view, pool))
    } else {
        None
    };
    let rows = par::map_indexed(queries.len(), |r| {
        let q = queries[r];
        match &tree {
            Some(t) => t.search(q, k),
            None => scan_query(view, pool, q, k),
        }
    });
    let mut neighbors = Vec::with_capacity(queries.len() * k);
    let mut distances = Vec::with_capacity(queries.len() * k);
    for row in rows {
        debug_assert_eq!(row.len(), k);
        for c in row {
            neighbors.push(c.idx);
            distances.push(c.d2.sqrt());
        }
    }
    NeighborTable {
        queries: queries.to_vec(),
        neighbors,
        distances,
        k,
        n_total: view.n,
    }
}

/// Exact kNN of each query among `pool` (defaults: all samples for both).
/// A query inside the pool never returns itself. Requires `1 <= k < |pool|`.
pub fn knn_search(
    view: FeaturesView<'_>,
    k: usize,
    query_subset: Option<&[usize]>,
    pool_subset: Option<&[usize]>,
    strategy: SearchStrategy,
) -> Result<NeighborTable> {
    let all: Vec<usize>;
    let (queries, pool) = {
        let need_all = query_subset.is_none() || pool_subset.is_none();
        all = if need_all { (0..view.n).collect() } else { Vec::new() };
        (
            query_subset.unwrap_or(&all),
            pool_subset.unwrap_or(&all),
        )
    };
    check_index_set(pool, view.n, "pool")?;
    check_index_set(queries, view.n, "query")?;
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    if k >= pool.len() {
        return Err(Error::Invalid(format!(
            "k = {k} must be smaller than the pool size {}",
            pool.len()
        )));
    }
    Ok(run_search(view, k, queries, pool, strategy))
}

/// Undirected kNN graph over all `n_total` vertices under the neighbor-union
/// rule. Adjacency lists are sorted and deduplicated.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    adjacency: Vec<Vec<usize>>,
    k: usize,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Build a graph directly from undirected edges. Self-loops are dropped
    /// and duplicate edges collapse; out-of-range endpoints error.
    pub fn from_edges(n: usize, k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Invalid(format!("edge ({a}, {b}) outside 0..{n}")));
            }
            if a == b {
                continue;
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        Ok(KnnGraph { adjacency, k })
    }
}

pub fn build_symmetric_graph(table: &NeighborTable) -> KnnGraph {
    let mut adjacency = vec![Vec::new(); table.n_total()];
    for (r, &q) in table.queries().iter().enumerate() {
        for &nb in table.row(r) {
            adjacency[q].push(nb);
            adjacency[nb].push(q);
        }
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    KnnGraph {
        adjacency,
        k: table.k(),
    }
}

/// Subgraph induced by the vertices with a given noisy label. Vertex ids are
/// global sample indices (sorted); adjacency is expressed in local positions.
#[derive(Debug, Clone)]
pub struct ClassSubgraph {
    class: u32,
    vertices: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
}

impl ClassSubgraph {
    pub fn class(&self) -> u32 {
        self.class
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Global sample indices, ascending.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Neighbors of local vertex `v`, as local positions.
    pub fn local_neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// Local position of a global sample index, if it belongs to this class.
    pub fn local_of(&self, global: usize) -> Option<usize> {
        self.vertices.binary_search(&global).ok()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

pub fn induce_class_subgraph(graph: &KnnGraph, labels: &[u32], class: u32) -> Result<ClassSubgraph> {
    if labels.len() != graph.n() {
        return Err(Error::Invalid(format!(
            "label count {} does not match graph size {}",
            labels.len(),
            graph.n()
        )));
    }
    let vertices: Vec<usize> = (0..graph.n()).filter(|&v| labels[v] == class).collect();
    let adjacency = vertices
        .iter()
        .map(|&v| {
            graph
                .neighbors(v)
                .iter()
                .filter(|&&nb| labels[nb] == class)
                .map(|&nb| vertices.binary_search(&nb).expect("neighbor has same class"))
                .collect()
        })
        .collect();
    Ok(ClassSubgraph {
        class,
        vertices,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(data: &[f32], d: usize) -> FeaturesView<'_> {
        FeaturesView::new(data, data.len() / d, d)
    }

    #[test]
    fn three_point_line_k1() {
        let data = [0.0, 0.0, 1.0, 0.0, 10.0, 0.0];
        let t = knn_search(view(&data, 2), 1, None, None, SearchStrategy::BruteForce).unwrap();
        assert_eq!(t.row(0), &[1]);
        assert_eq!(t.row(1), &[0]);
        assert_eq!(t.row(2), &[1]);
        assert_eq!(t.row_distances(2), &[9.0]);
    }

    #[test]
    fn ties_break_by_ascending_index() {
        // Points 1 and 2 are equidistant from 0; the lower index wins.
        let data = [0.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        let t = knn_search(view(&data, 2), 1, Some(&[0]), None, SearchStrategy::BruteForce).unwrap();
        assert_eq!(t.row(0), &[1]);
    }

    #[test]
    fn duplicate_points_are_ordered_by_index() {
        let data = [2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 9.0, 9.0];
        let t = knn_search(view(&data, 2), 2, None, None, SearchStrategy::BruteForce).unwrap();
        assert_eq!(t.row(0), &[1, 2]);
        assert_eq!(t.row(1), &[0, 2]);
        assert_eq!(t.row_distances(0), &[0.0, 0.0]);
    }

    #[test]
    fn distances_are_euclidean_and_sorted() {
        let data = [0.0, 3.0, 4.0, 1.0];
        let t = knn_search(view(&data, 1), 3, Some(&[0]), None, SearchStrategy::BruteForce).unwrap();
        assert_eq!(t.row(0), &[3, 1, 2]);
        assert_eq!(t.row_distances(0), &[1.0, 3.0, 4.0]);
    }

    #[test]
    fn pool_subset_excludes_outsiders_and_self() {
        let data = [0.0, 1.0, 2.0, 3.0, 4.0];
        let pool = [0, 2, 4];
        let t = knn_search(view(&data, 1), 2, Some(&pool), Some(&pool), SearchStrategy::BruteForce)
            .unwrap();
        assert_eq!(t.queries(), &pool);
        assert_eq!(t.row(0), &[2, 4]);
        assert_eq!(t.row(1), &[0, 4]);
        assert_eq!(t.row(2), &[2, 0]);
    }

    #[test]
    fn rejects_bad_k_and_bad_sets() {
        let data = [0.0, 1.0, 2.0];
        let v = view(&data, 1);
        assert!(knn_search(v, 0, None, None, SearchStrategy::Auto).is_err());
        assert!(knn_search(v, 3, None, None, SearchStrategy::Auto).is_err());
        assert!(knn_search(v, 1, Some(&[2, 1]), None, SearchStrategy::Auto).is_err());
        assert!(knn_search(v, 1, None, Some(&[0, 0]), SearchStrategy::Auto).is_err());
        assert!(knn_search(v, 1, None, Some(&[5]), SearchStrategy::Auto).is_err());
    }

    #[test]
    fn kd_tree_matches_brute_force_bitwise() {
        // Integer-ish coordinates provoke exact distance ties.
        let mut data = Vec::new();
        let mut state = 0x1234_5678_u64;
        for _ in 0..(257 * 3) {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            data.push(((state >> 33) % 7) as f32);
        }
        let v = view(&data, 3);
        for k in [1, 2, 5, 16] {
            let a = knn_search(v, k, None, None, SearchStrategy::BruteForce).unwrap();
            let b = knn_search(v, k, None, None, SearchStrategy::KdTree).unwrap();
            assert_eq!(a.neighbors, b.neighbors, "k={k} neighbor mismatch");
            let da: Vec<u64> = a.distances.iter().map(|x| x.to_bits()).collect();
            let db: Vec<u64> = b.distances.iter().map(|x| x.to_bits()).collect();
            assert_eq!(da, db, "k={k} distance bits mismatch");
        }
    }

    #[test]
    fn or_rule_creates_one_directional_edges() {
        // 2's nearest is 1, but 1's nearest is 0; the edge {1,2} must exist.
        let data = [0.0, 1.0, 2.5];
        let t = knn_search(view(&data, 1), 1, None, None, SearchStrategy::BruteForce).unwrap();
        let g = build_symmetric_graph(&t);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1]);
    }

    #[test]
    fn graph_is_symmetric_without_self_loops() {
        let mut data = Vec::new();
        let mut state = 7u64;
        for _ in 0..200 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            data.push(((state >> 32) as u32 % 1000) as f32 / 10.0);
        }
        let t = knn_search(view(&data, 2), 3, None, None, SearchStrategy::Auto).unwrap();
        let g = build_symmetric_graph(&t);
        for v in 0..g.n() {
            for &nb in g.neighbors(v) {
                assert_ne!(nb, v, "self loop at {v}");
                assert!(g.neighbors(nb).contains(&v), "edge {v}-{nb} not symmetric");
            }
        }
    }

    #[test]
    fn induced_subgraph_keeps_same_class_edges_only() {
        let data = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let labels = [0u32, 1, 0, 1, 0, 1];
        let t = knn_search(view(&data, 1), 2, None, None, SearchStrategy::BruteForce).unwrap();
        let g = build_symmetric_graph(&t);
        let sub = induce_class_subgraph(&g, &labels, 0).unwrap();
        assert_eq!(sub.vertices(), &[0, 2, 4]);
        for (local, &global) in sub.vertices().iter().enumerate() {
            for &nb in sub.local_neighbors(local) {
                let nb_global = sub.vertices()[nb];
                assert_eq!(labels[nb_global], 0);
                assert!(g.neighbors(global).contains(&nb_global));
            }
        }
        let empty = induce_class_subgraph(&g, &labels, 9).unwrap();
        assert_eq!(empty.num_vertices(), 0);
    }
}
