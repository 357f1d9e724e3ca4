//! The selection pipeline: per-class largest components plus the
//! neighborhood-vote filter, and the round-based iteration driver.
//!
//! `topo_cc_select` keeps, for every class, the largest connected component
//! of that class's induced subgraph of the kNN graph. `zeta_filter` then
//! re-queries `k_o` neighbors inside the retained pool and keeps a point only
//! if at least a `zeta` fraction of those neighbors carry its label.
//! `topo_filter_select` composes the two stages; `naive_select` keeps
//! everything and serves as the baseline.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::components::{connected_components, largest_component};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn::{build_symmetric_graph, induce_class_subgraph, knn_search, KnnGraph, SearchStrategy};
use crate::par;

/// Tuning knobs for the selection pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Neighbor count for the component-stage graph.
    pub k_c: usize,
    /// Neighbor count for the vote filter.
    pub k_o: usize,
    /// Minimum same-label neighbor fraction to keep a point (non-strict).
    pub zeta: f64,
    /// First round (1-based) at which selection runs during iteration.
    pub milestone: usize,
    /// Rounds between selections during iteration.
    pub period: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            k_c: 4,
            k_o: 32,
            zeta: 0.5,
            milestone: 1,
            period: 1,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_c == 0 {
            return Err(Error::Invalid("k_c must be >= 1".into()));
        }
        if self.k_o == 0 {
            return Err(Error::Invalid("k_o must be >= 1".into()));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::Invalid(format!(
                "zeta = {} outside (0, 1]",
                self.zeta
            )));
        }
        if self.milestone == 0 {
            return Err(Error::Invalid("milestone must be >= 1".into()));
        }
        if self.period == 0 {
            return Err(Error::Invalid("period must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Naive,
    TopoCc,
    TopoFilter,
}

/// Outcome of one selection pass. Index sets are sorted ascending; map keys
/// are class ids. `kept` and `outliers` partition the union of the per-class
/// components: points outside every largest component are dropped earlier and
/// appear in neither set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    pub n: usize,
    pub k_c: Option<usize>,
    pub k_o: Option<usize>,
    pub zeta: Option<f64>,
    /// Largest-component membership per class.
    pub per_class_components: BTreeMap<u32, Vec<usize>>,
    /// All component sizes per class, descending.
    pub component_size_histograms: BTreeMap<u32, Vec<usize>>,
    pub kept: Vec<usize>,
    pub outliers: Vec<usize>,
    /// Classes with no samples at all.
    pub absent_classes: Vec<u32>,
    /// Classes whose component survived but whose members were all filtered.
    pub filtered_out_classes: Vec<u32>,
}

impl SelectionResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("cannot serialize selection: {e}")))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let result: SelectionResult = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        result.check_invariants()?;
        Ok(result)
    }

    /// Structural sanity: sortedness, disjointness, and the kept/outlier
    /// partition of the component union.
    pub fn check_invariants(&self) -> Result<()> {
        let sorted_unique = |set: &[usize], what: &str| -> Result<()> {
            for w in set.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Format(format!("{what} not sorted/unique")));
                }
            }
            if set.last().is_some_and(|&v| v >= self.n) {
                return Err(Error::Format(format!("{what} index out of range")));
            }
            Ok(())
        };
        sorted_unique(&self.kept, "kept")?;
        sorted_unique(&self.outliers, "outliers")?;
        let mut union = Vec::new();
        for (class, members) in &self.per_class_components {
            sorted_unique(members, &format!("component of class {class}"))?;
            union.extend_from_slice(members);
        }
        union.sort_unstable();
        if union.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Format("class components overlap".into()));
        }
        let mut merged: Vec<usize> = self
            .kept
            .iter()
            .chain(self.outliers.iter())
            .copied()
            .collect();
        merged.sort_unstable();
        if merged.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Format("kept and outliers overlap".into()));
        }
        if merged != union {
            return Err(Error::Format(
                "kept + outliers do not partition the component union".into(),
            ));
        }
        Ok(())
    }
}

pub fn save_selection(result: &SelectionResult, path: impl AsRef<Path>) -> Result<()> {
    result.save(path)
}

pub fn load_selection(path: impl AsRef<Path>) -> Result<SelectionResult> {
    SelectionResult::load(path)
}

/// Keep everything; the baseline selection.
pub fn naive_select(ds: &Dataset) -> SelectionResult {
    let mut per_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in ds.noisy_labels().iter().enumerate() {
        per_class.entry(l).or_default().push(i);
    }
    let histograms = per_class
        .iter()
        .map(|(&c, m)| (c, vec![m.len()]))
        .collect();
    let absent = (0..ds.num_classes() as u32)
        .filter(|c| !per_class.contains_key(c))
        .collect();
    SelectionResult {
        method: SelectionMethod::Naive,
        n: ds.n(),
        k_c: None,
        k_o: None,
        zeta: None,
        per_class_components: per_class,
        component_size_histograms: histograms,
        kept: (0..ds.n()).collect(),
        outliers: Vec::new(),
        absent_classes: absent,
        filtered_out_classes: Vec::new(),
    }
}

fn clamp_k(k: usize, limit: usize, what: &str) -> usize {
    if k > limit {
        log::warn!("{what} = {k} exceeds available neighbors; clamping to {limit}");
        limit
    } else {
        k
    }
}

/// Largest-component selection: build the kNN graph with `k_c`, induce each
/// class's subgraph, and keep its largest component.
pub fn topo_cc_select(ds: &Dataset, k_c: usize) -> Result<SelectionResult> {
    if k_c == 0 {
        return Err(Error::Invalid("k_c must be >= 1".into()));
    }
    let n = ds.n();
    if n == 1 {
        let mut per_class = BTreeMap::new();
        let mut histograms = BTreeMap::new();
        per_class.insert(ds.noisy_labels()[0], vec![0]);
        histograms.insert(ds.noisy_labels()[0], vec![1]);
        return Ok(SelectionResult {
            method: SelectionMethod::TopoCc,
            n,
            k_c: Some(k_c),
            k_o: None,
            zeta: None,
            per_class_components: per_class,
            component_size_histograms: histograms,
            kept: vec![0],
            outliers: Vec::new(),
            absent_classes: Vec::new(),
            filtered_out_classes: Vec::new(),
        });
    }
    let k = clamp_k(k_c, n - 1, "k_c");
    let table = knn_search(ds.features(), k, None, None, SearchStrategy::Auto)?;
    let graph = build_symmetric_graph(&table);
    topo_cc_with_graph(ds, &graph)
}

/// Largest-component selection on an already-built symmetric kNN graph.
/// The graph must cover the whole dataset.
pub fn topo_cc_with_graph(ds: &Dataset, graph: &KnnGraph) -> Result<SelectionResult> {
    if graph.n() != ds.n() {
        return Err(Error::Invalid(format!(
            "graph covers {} vertices but the dataset has {}",
            graph.n(),
            ds.n()
        )));
    }
    let mut per_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut histograms: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut absent = Vec::new();
    let classes: Vec<u32> = (0..ds.num_classes() as u32).collect();
    let analyzed = par::map_indexed(classes.len(), |ci| {
        let class = classes[ci];
        let sub = induce_class_subgraph(graph, ds.noisy_labels(), class)
            .expect("labels match graph size");
        let labeling = connected_components(&sub);
        let largest = largest_component(&sub, &labeling).expect("labeling matches subgraph");
        (class, largest, labeling.size_histogram())
    });
    for (class, largest, histogram) in analyzed {
        if largest.is_empty() {
            absent.push(class);
        } else {
            per_class.insert(class, largest);
            histograms.insert(class, histogram);
        }
    }
    let mut kept: Vec<usize> = per_class.values().flatten().copied().collect();
    kept.sort_unstable();
    Ok(SelectionResult {
        method: SelectionMethod::TopoCc,
        n: ds.n(),
        k_c: Some(graph.k()),
        k_o: None,
        zeta: None,
        per_class_components: per_class,
        component_size_histograms: histograms,
        kept,
        outliers: Vec::new(),
        absent_classes: absent,
        filtered_out_classes: Vec::new(),
    })
}

/// Same-label neighbor fraction for every pool member: entry `r` is the share
/// of `s[r]`'s `k_o` nearest neighbors inside `s` that carry `s[r]`'s label.
/// `k_o` is clamped to `|s| - 1` when the pool is too small; a singleton pool
/// gets ratio 1. Thresholding these ratios at `zeta` reproduces `zeta_filter`,
/// so a sweep over `zeta` needs only one neighbor search.
pub fn vote_ratios(ds: &Dataset, s: &[usize], k_o: usize) -> Result<Vec<f64>> {
    if k_o == 0 {
        return Err(Error::Invalid("k_o must be >= 1".into()));
    }
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if s.len() == 1 {
        log::warn!("vote filter pool is a single point; keeping it");
        return Ok(vec![1.0]);
    }
    let k = clamp_k(k_o, s.len() - 1, "k_o");
    let labels = ds.noisy_labels();
    let table = knn_search(ds.features(), k, Some(s), Some(s), SearchStrategy::Auto)?;
    Ok(par::map_indexed(s.len(), |r| {
        let q = s[r];
        let same = table
            .row(r)
            .iter()
            .filter(|&&nb| labels[nb] == labels[q])
            .count();
        same as f64 / k as f64
    }))
}

/// Split a pool by its vote ratios: non-strict threshold at `zeta`.
/// Returns `(kept, removed)`, both sorted when `s` is sorted.
pub fn partition_by_ratio(s: &[usize], ratios: &[f64], zeta: f64) -> (Vec<usize>, Vec<usize>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (&idx, &ratio) in s.iter().zip(ratios) {
        if ratio >= zeta {
            kept.push(idx);
        } else {
            removed.push(idx);
        }
    }
    (kept, removed)
}

/// Vote filter over a retained pool `s`: keep `x` iff at least a `zeta`
/// fraction of its `k_o` nearest neighbors inside `s` share its label.
/// Returns `(kept, removed)`, both sorted. `k_o` is clamped to `|s| - 1`
/// when the pool is too small; a singleton pool is kept as-is.
pub fn zeta_filter(
    ds: &Dataset,
    s: &[usize],
    k_o: usize,
    zeta: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::Invalid(format!("zeta = {zeta} outside (0, 1]")));
    }
    let ratios = vote_ratios(ds, s, k_o)?;
    Ok(partition_by_ratio(s, &ratios, zeta))
}

fn apply_vote_stage(
    ds: &Dataset,
    mut result: SelectionResult,
    params: &FilterParams,
) -> Result<SelectionResult> {
    let s = std::mem::take(&mut result.kept);
    let (kept, outliers) = zeta_filter(ds, &s, params.k_o, params.zeta)?;
    let mut filtered_out = Vec::new();
    for (&class, members) in &result.per_class_components {
        let any_kept = members.iter().any(|m| kept.binary_search(m).is_ok());
        if !any_kept {
            log::warn!("class {class} lost all members to the vote filter");
            filtered_out.push(class);
        }
    }
    result.method = SelectionMethod::TopoFilter;
    result.k_o = Some(params.k_o.min(s.len().saturating_sub(1)).max(1));
    result.zeta = Some(params.zeta);
    result.kept = kept;
    result.outliers = outliers;
    result.filtered_out_classes = filtered_out;
    Ok(result)
}

/// Full pipeline: largest components with `k_c`, then the `zeta` vote filter
/// with `k_o` inside the retained pool.
pub fn topo_filter_select(ds: &Dataset, params: &FilterParams) -> Result<SelectionResult> {
    params.validate()?;
    let result = topo_cc_select(ds, params.k_c)?;
    apply_vote_stage(ds, result, params)
}

/// Full pipeline on an already-built symmetric kNN graph (the component
/// stage reuses it; the vote stage still queries inside the pool).
pub fn topo_filter_with_graph(
    ds: &Dataset,
    graph: &KnnGraph,
    params: &FilterParams,
) -> Result<SelectionResult> {
    params.validate()?;
    let result = topo_cc_with_graph(ds, graph)?;
    apply_vote_stage(ds, result, params)
}

/// Feature source for round-based iteration. Rounds are 0-based here; the
/// driver reports 1-based round numbers in its results.
pub trait RepresentationProvider {
    fn num_samples(&self) -> usize;
    fn dim(&self) -> usize;
    /// Row-major `n x d` features for the given round.
    fn features_for_round(&mut self, round: usize) -> Result<Vec<f32>>;
}

/// The same features every round.
pub struct FixedProvider {
    data: Vec<f32>,
    n: usize,
    d: usize,
}

impl FixedProvider {
    pub fn new(data: Vec<f32>, d: usize) -> Result<Self> {
        if d == 0 || data.len() % d != 0 || data.is_empty() {
            return Err(Error::Invalid("features must be a non-empty n x d matrix".into()));
        }
        let n = data.len() / d;
        Ok(FixedProvider { data, n, d })
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        FixedProvider {
            data: ds.features().data.to_vec(),
            n: ds.n(),
            d: ds.dim(),
        }
    }
}

impl RepresentationProvider for FixedProvider {
    fn num_samples(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn features_for_round(&mut self, _round: usize) -> Result<Vec<f32>> {
        Ok(self.data.clone())
    }
}

/// One feature file per round, replayed in order; rounds past the end reuse
/// the final file.
pub struct FileSequenceProvider {
    paths: Vec<std::path::PathBuf>,
    n: usize,
    d: usize,
}

impl FileSequenceProvider {
    pub fn new(paths: Vec<std::path::PathBuf>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Invalid("feature file sequence is empty".into()));
        }
        let (_, n, d) = crate::dataset::load_features(&paths[0])?;
        Ok(FileSequenceProvider { paths, n, d })
    }
}

impl RepresentationProvider for FileSequenceProvider {
    fn num_samples(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn features_for_round(&mut self, round: usize) -> Result<Vec<f32>> {
        let path = &self.paths[round.min(self.paths.len() - 1)];
        let (data, n, d) = crate::dataset::load_features(path)?;
        if n != self.n || d != self.d {
            return Err(Error::Invalid(format!(
                "{}: feature shape {n}x{d} differs from round 0 shape {}x{}",
                path.display(),
                self.n,
                self.d
            )));
        }
        Ok(data)
    }
}

/// Result of one iteration round. `ran_selection` is false for warm-up and
/// carried-forward rounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundSelection {
    /// 1-based round number.
    pub round: usize,
    pub ran_selection: bool,
    pub zeta: f64,
    pub result: SelectionResult,
}

/// Drive selection across training rounds: before `milestone` every point is
/// kept; from `milestone` on, selection runs every `period` rounds on that
/// round's features and the latest result carries forward in between.
pub fn iterate_selection(
    provider: &mut dyn RepresentationProvider,
    noisy_labels: &[u32],
    params: &FilterParams,
    rounds: usize,
    zeta_schedule: Option<&[f64]>,
) -> Result<Vec<RoundSelection>> {
    params.validate()?;
    if rounds == 0 {
        return Err(Error::Invalid("rounds must be >= 1".into()));
    }
    if provider.num_samples() != noisy_labels.len() {
        return Err(Error::Invalid(format!(
            "provider supplies {} samples but {} labels given",
            provider.num_samples(),
            noisy_labels.len()
        )));
    }
    if let Some(schedule) = zeta_schedule {
        if schedule.len() < rounds {
            return Err(Error::Invalid(format!(
                "zeta schedule has {} entries for {rounds} rounds",
                schedule.len()
            )));
        }
        for &z in &schedule[..rounds] {
            if !(z > 0.0 && z <= 1.0) {
                return Err(Error::Invalid(format!("scheduled zeta = {z} outside (0, 1]")));
            }
        }
    }
    let (n, d) = (provider.num_samples(), provider.dim());
    let mut out: Vec<RoundSelection> = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let zeta_t = zeta_schedule.map_or(params.zeta, |s| s[t - 1]);
        let run_now = t >= params.milestone && (t - params.milestone) % params.period == 0;
        let carried = !run_now && t >= params.milestone;
        if carried {
            let prev = out.last().expect("milestone >= 1 guarantees a previous round");
            out.push(RoundSelection {
                round: t,
                ran_selection: false,
                zeta: prev.zeta,
                result: prev.result.clone(),
            });
            continue;
        }
        let data = provider.features_for_round(t - 1)?;
        if data.len() != n * d {
            return Err(Error::Invalid(format!(
                "round {t}: provider returned {} values, expected {}",
                data.len(),
                n * d
            )));
        }
        let ds = Dataset::new(data, d, noisy_labels.to_vec(), None, None)?;
        let (ran, result) = if run_now {
            let round_params = FilterParams {
                zeta: zeta_t,
                ..*params
            };
            (true, topo_filter_select(&ds, &round_params)?)
        } else {
            (false, naive_select(&ds))
        };
        out.push(RoundSelection {
            round: t,
            ran_selection: ran,
            zeta: zeta_t,
            result,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_dataset(coords: &[f32], labels: &[u32]) -> Dataset {
        Dataset::new(coords.to_vec(), 1, labels.to_vec(), None, None).unwrap()
    }

    #[test]
    fn mislabeled_point_is_dropped_at_component_stage() {
        // Sample 5 sits in the right cluster but carries the left label; its
        // class subgraph leaves it isolated, so the largest component drops it.
        let ds = line_dataset(
            &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0],
            &[0, 0, 0, 1, 1, 0],
        );
        let r = topo_cc_select(&ds, 1).unwrap();
        assert_eq!(r.per_class_components[&0], vec![0, 1, 2]);
        assert_eq!(r.per_class_components[&1], vec![3, 4]);
        assert_eq!(r.kept, vec![0, 1, 2, 3, 4]);
        assert!(r.outliers.is_empty());
        assert_eq!(r.component_size_histograms[&0], vec![3, 1]);
        r.check_invariants().unwrap();
    }

    #[test]
    fn vote_filter_threshold_is_non_strict() {
        // Point 3's two pool neighbors split 1/1; ratio 0.5 passes zeta=0.5
        // but fails zeta just above it.
        let ds = line_dataset(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 0, 1]);
        let s = [0, 1, 2, 3];
        let (kept, removed) = zeta_filter(&ds, &s, 2, 0.5).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
        assert_eq!(removed, vec![3]);

        // With two labels split down the middle every point sees exactly one
        // same-label neighbor out of two: ratio 1/2 for all four points.
        let ds2 = line_dataset(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]);
        let (kept2, _) = zeta_filter(&ds2, &s, 2, 0.5).unwrap();
        assert_eq!(kept2, vec![0, 1, 2, 3]);
        let (kept3, _) = zeta_filter(&ds2, &s, 2, 0.500001).unwrap();
        assert!(kept3.is_empty(), "strictly above 1/2 removes everything");
    }

    #[test]
    fn zeta_of_one_over_k_keeps_any_point_with_a_same_label_neighbor() {
        let ds = line_dataset(&[0.0, 1.0, 2.0, 3.0, 8.0], &[0, 0, 1, 0, 1]);
        let s = [0, 1, 2, 3, 4];
        let (kept, removed) = zeta_filter(&ds, &s, 2, 0.5).unwrap();
        // Point 2 has neighbors 1 and 3, both label 0: no support, removed.
        // Point 4 has neighbors 3 and 2: one label-1 neighbor, ratio 1/2.
        assert!(removed.contains(&2));
        assert!(kept.contains(&4));
    }

    #[test]
    fn small_pool_clamps_k_o() {
        let ds = line_dataset(&[0.0, 1.0, 2.0], &[0, 0, 0]);
        let (kept, removed) = zeta_filter(&ds, &[0, 1, 2], 32, 0.5).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
        assert!(removed.is_empty());
        let (single, _) = zeta_filter(&ds, &[1], 32, 0.5).unwrap();
        assert_eq!(single, vec![1]);
    }

    #[test]
    fn kept_sets_nest_as_zeta_grows() {
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        let mut state = 11u64;
        for i in 0..120 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let cluster = i % 2;
            coords.push(cluster as f32 * 8.0 + ((state >> 40) % 100) as f32 / 25.0);
            let flip = (state >> 13) % 10 == 0;
            labels.push(if flip { 1 - cluster as u32 } else { cluster as u32 });
        }
        let ds = line_dataset(&coords, &labels);
        let base = topo_cc_select(&ds, 4).unwrap();
        let mut previous: Option<Vec<usize>> = None;
        for zeta in [0.25, 0.5, 0.75] {
            let params = FilterParams {
                k_c: 4,
                k_o: 8,
                zeta,
                ..FilterParams::default()
            };
            let r = topo_filter_select(&ds, &params).unwrap();
            r.check_invariants().unwrap();
            assert!(
                r.kept.iter().all(|i| base.kept.binary_search(i).is_ok()),
                "zeta={zeta}: kept must be inside the component stage output"
            );
            if let Some(prev) = &previous {
                assert!(
                    r.kept.iter().all(|i| prev.binary_search(i).is_ok()),
                    "zeta={zeta}: kept must shrink as zeta grows"
                );
            }
            previous = Some(r.kept);
        }
    }

    #[test]
    fn components_carry_their_class_label() {
        let ds = line_dataset(
            &[0.0, 0.5, 1.0, 9.0, 9.5, 10.0, 20.0],
            &[0, 0, 1, 1, 1, 0, 2],
        );
        let r = topo_filter_select(&ds, &FilterParams { k_c: 2, k_o: 2, ..Default::default() })
            .unwrap();
        for (&class, members) in &r.per_class_components {
            for &m in members {
                assert_eq!(ds.noisy_labels()[m], class);
            }
        }
        r.check_invariants().unwrap();
    }

    #[test]
    fn naive_keeps_everything() {
        let ds = line_dataset(&[0.0, 1.0, 5.0], &[0, 1, 1]);
        let r = naive_select(&ds);
        assert_eq!(r.kept, vec![0, 1, 2]);
        assert!(r.outliers.is_empty());
        r.check_invariants().unwrap();
    }

    #[test]
    fn selection_json_roundtrip_is_stable() {
        let ds = line_dataset(&[0.0, 1.0, 2.0, 10.0, 11.0], &[0, 0, 0, 1, 1]);
        let r = topo_filter_select(&ds, &FilterParams { k_c: 1, k_o: 2, ..Default::default() })
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sel.json");
        r.save(&path).unwrap();
        let back = SelectionResult::load(&path).unwrap();
        assert_eq!(r, back);
        let again = dir.path().join("sel2.json");
        back.save(&again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap(),
            "serialization must be byte-stable"
        );
    }

    #[test]
    fn load_rejects_inconsistent_results() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"method":"topo_filter","n":3,"k_c":1,"k_o":1,"zeta":0.5,
               "per_class_components":{"0":[0,1]},
               "component_size_histograms":{"0":[2]},
               "kept":[0,1],"outliers":[1],
               "absent_classes":[],"filtered_out_classes":[]}"#,
        )
        .unwrap();
        let err = SelectionResult::load(&path).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn iteration_schedule_matches_milestone_and_period() {
        let coords: Vec<f32> = (0..40)
            .map(|i| if i % 2 == 0 { i as f32 / 10.0 } else { 8.0 + i as f32 / 10.0 })
            .collect();
        let labels: Vec<u32> = (0..40).map(|i| (i % 2) as u32).collect();
        let mut provider = FixedProvider::new(coords, 1).unwrap();
        let params = FilterParams {
            k_c: 2,
            k_o: 4,
            zeta: 0.5,
            milestone: 3,
            period: 2,
        };
        let rounds = iterate_selection(&mut provider, &labels, &params, 6, None).unwrap();
        let ran: Vec<bool> = rounds.iter().map(|r| r.ran_selection).collect();
        assert_eq!(ran, vec![false, false, true, false, true, false]);
        assert_eq!(rounds[0].result.method, SelectionMethod::Naive);
        assert_eq!(rounds[2].result.method, SelectionMethod::TopoFilter);
        assert_eq!(
            rounds[3].result, rounds[2].result,
            "off-period rounds carry the previous selection forward"
        );
        for (i, r) in rounds.iter().enumerate() {
            assert_eq!(r.round, i + 1);
        }
    }

    #[test]
    fn iteration_rejects_shape_changes() {
        struct Shrinking;
        impl RepresentationProvider for Shrinking {
            fn num_samples(&self) -> usize {
                4
            }
            fn dim(&self) -> usize {
                1
            }
            fn features_for_round(&mut self, round: usize) -> Result<Vec<f32>> {
                Ok(vec![0.0; if round == 0 { 4 } else { 3 }])
            }
        }
        let mut p = Shrinking;
        let err = iterate_selection(&mut p, &[0, 0, 1, 1], &FilterParams::default(), 2, None)
            .unwrap_err();
        assert!(err.to_string().contains("expected"), "{err}");
    }

    #[test]
    fn zeta_schedule_overrides_per_round() {
        let coords: Vec<f32> = (0..20).map(|i| i as f32).collect();
        let labels = vec![0u32; 20];
        let mut provider = FixedProvider::new(coords, 1).unwrap();
        let params = FilterParams {
            k_c: 2,
            k_o: 2,
            milestone: 1,
            ..Default::default()
        };
        let rounds =
            iterate_selection(&mut provider, &labels, &params, 3, Some(&[0.25, 0.5, 0.75]))
                .unwrap();
        assert_eq!(rounds[0].zeta, 0.25);
        assert_eq!(rounds[2].zeta, 0.75);
        assert!(iterate_selection(&mut provider, &labels, &params, 3, Some(&[0.5])).is_err());
    }
}
