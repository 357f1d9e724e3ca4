//! Connected components of class subgraphs via disjoint-set union.
//!
//! Component ids are canonical: enumerating vertices in ascending order, the
//! component containing the smallest unseen vertex receives the next id, so
//! id 0 always contains vertex 0 of the subgraph.

use crate::error::{Error, Result};
use crate::knn::ClassSubgraph;

/// Disjoint-set union with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merge the sets of `a` and `b`; returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// Component assignment for one class subgraph, in local vertex positions.
#[derive(Debug, Clone)]
pub struct ComponentLabeling {
    component_id: Vec<usize>,
    component_sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn num_components(&self) -> usize {
        self.component_sizes.len()
    }

    /// Component id of local vertex `v`.
    pub fn id_of(&self, v: usize) -> usize {
        self.component_id[v]
    }

    pub fn ids(&self) -> &[usize] {
        &self.component_id
    }

    /// Size of each component, indexed by component id.
    pub fn sizes(&self) -> &[usize] {
        &self.component_sizes
    }

    /// Sizes sorted descending, for reporting.
    pub fn size_histogram(&self) -> Vec<usize> {
        let mut h = self.component_sizes.clone();
        h.sort_unstable_by(|a, b| b.cmp(a));
        h
    }
}

/// Label every vertex of the subgraph with its component id.
pub fn connected_components(sub: &ClassSubgraph) -> ComponentLabeling {
    let n = sub.num_vertices();
    let mut uf = UnionFind::new(n);
    for v in 0..n {
        for &nb in sub.local_neighbors(v) {
            uf.union(v, nb);
        }
    }
    let mut component_id = vec![usize::MAX; n];
    let mut component_sizes = Vec::new();
    let mut root_to_id = vec![usize::MAX; n];
    for v in 0..n {
        let r = uf.find(v);
        if root_to_id[r] == usize::MAX {
            root_to_id[r] = component_sizes.len();
            component_sizes.push(0);
        }
        component_id[v] = root_to_id[r];
        component_sizes[root_to_id[r]] += 1;
    }
    ComponentLabeling {
        component_id,
        component_sizes,
    }
}

/// Global indices of the largest component; among equally large components the
/// one containing the smallest vertex index wins. Empty subgraphs yield an
/// empty set with a warning.
pub fn largest_component(sub: &ClassSubgraph, labeling: &ComponentLabeling) -> Result<Vec<usize>> {
    if labeling.ids().len() != sub.num_vertices() {
        return Err(Error::Invalid(format!(
            "labeling covers {} vertices but subgraph has {}",
            labeling.ids().len(),
            sub.num_vertices()
        )));
    }
    if sub.num_vertices() == 0 {
        log::warn!(
            "class {} has no samples; its largest component is empty",
            sub.class()
        );
        return Ok(Vec::new());
    }
    // Canonical ids are assigned in ascending vertex order, so scanning ids
    // from 0 makes the first maximal component the smallest-vertex one.
    let mut best = 0usize;
    for (id, &size) in labeling.sizes().iter().enumerate() {
        if size > labeling.sizes()[best] {
            best = id;
        }
    }
    Ok(sub
        .vertices()
        .iter()
        .enumerate()
        .filter(|(local, _)| labeling.id_of(*local) == best)
        .map(|(_, &global)| global)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeaturesView;
    use crate::knn::{build_symmetric_graph, induce_class_subgraph, knn_search, SearchStrategy};

    /// BFS reachability, the reference implementation for component tests.
    fn bfs_components(sub: &ClassSubgraph) -> Vec<usize> {
        let n = sub.num_vertices();
        let mut id = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if id[start] != usize::MAX {
                continue;
            }
            let mut queue = vec![start];
            id[start] = next;
            while let Some(v) = queue.pop() {
                for &nb in sub.local_neighbors(v) {
                    if id[nb] == usize::MAX {
                        id[nb] = next;
                        queue.push(nb);
                    }
                }
            }
            next += 1;
        }
        id
    }

    fn line_subgraph(coords: &[f32], labels: &[u32], k: usize, class: u32) -> ClassSubgraph {
        let v = FeaturesView::new(coords, coords.len(), 1);
        let t = knn_search(v, k, None, None, SearchStrategy::BruteForce).unwrap();
        let g = build_symmetric_graph(&t);
        induce_class_subgraph(&g, labels, class).unwrap()
    }

    #[test]
    fn two_clusters_split_into_two_components() {
        // 0,1,2 clustered near zero; 3,4 clustered near 100.
        let coords = [0.0, 1.0, 2.0, 100.0, 101.0];
        let labels = [0u32; 5];
        let sub = line_subgraph(&coords, &labels, 1, 0);
        let lab = connected_components(&sub);
        assert_eq!(lab.num_components(), 2);
        assert_eq!(largest_component(&sub, &lab).unwrap(), vec![0, 1, 2]);
        assert_eq!(lab.size_histogram(), vec![3, 2]);
    }

    #[test]
    fn size_tie_prefers_smallest_vertex() {
        let coords = [0.0, 1.0, 100.0, 101.0];
        let labels = [0u32; 4];
        let sub = line_subgraph(&coords, &labels, 1, 0);
        let lab = connected_components(&sub);
        assert_eq!(lab.num_components(), 2);
        assert_eq!(largest_component(&sub, &lab).unwrap(), vec![0, 1]);
    }

    #[test]
    fn empty_subgraph_gives_empty_component() {
        let coords = [0.0, 1.0];
        let labels = [0u32, 0];
        let sub = line_subgraph(&coords, &labels, 1, 3);
        let lab = connected_components(&sub);
        assert_eq!(lab.num_components(), 0);
        assert!(largest_component(&sub, &lab).unwrap().is_empty());
    }

    #[test]
    fn singleton_class_yields_its_single_point() {
        let coords = [0.0, 1.0, 2.0];
        let labels = [0u32, 1, 0];
        let sub = line_subgraph(&coords, &labels, 1, 1);
        let lab = connected_components(&sub);
        assert_eq!(largest_component(&sub, &lab).unwrap(), vec![1]);
    }

    #[test]
    fn canonical_ids_follow_vertex_order() {
        let coords = [0.0, 50.0, 0.5, 50.5, 1.0];
        let labels = [0u32; 5];
        let sub = line_subgraph(&coords, &labels, 1, 0);
        let lab = connected_components(&sub);
        // Vertex 0's component must take id 0.
        assert_eq!(lab.id_of(0), 0);
        assert_eq!(lab.id_of(2), 0);
        assert_eq!(lab.id_of(1), 1);
    }

    #[test]
    fn union_find_matches_bfs_on_random_graphs() {
        // Random geometric graphs over 1-D points, several seeds and ks.
        let mut state = 0xdead_beef_u64;
        for trial in 0..50 {
            let n = 20 + (trial % 7) * 25;
            let mut coords = Vec::with_capacity(n);
            for _ in 0..n {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                coords.push(((state >> 32) % 5000) as f32 / 10.0);
            }
            let labels = vec![0u32; n];
            let k = 1 + (trial % 4);
            let sub = line_subgraph(&coords, &labels, k, 0);
            let lab = connected_components(&sub);
            let oracle = bfs_components(&sub);
            assert_eq!(lab.ids(), &oracle[..], "trial {trial}: partition mismatch");
            let max = *oracle.iter().max().unwrap();
            assert_eq!(lab.num_components(), max + 1);
        }
    }
}
