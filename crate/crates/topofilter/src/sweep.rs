//! Hyper-parameter sweeps: run the selection pipeline over a grid of
//! (zeta, k_c, k_o) cells on shared per-trial datasets, emitting one CSV row
//! per cell per trial plus an aggregated summary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::filter::{partition_by_ratio, topo_cc_with_graph, vote_ratios};
use crate::knn::{build_symmetric_graph, induce_class_subgraph, knn_search, SearchStrategy};
use crate::metrics::{
    analytic_purities, bayes_consistency, check_connectivity, check_filtering, check_isolation,
    empirical_purity, spec_fingerprint,
};
use crate::noise::{inject_noise, TransitionMatrix};
use crate::synth::{
    bayes_classifier, region_membership, sample_mixture, zeta_prime, MixturePosterior,
    MixtureSpec, Region,
};
use crate::{par, rng};

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub spec: MixtureSpec,
    pub transition: TransitionMatrix,
    pub zetas: Vec<f64>,
    pub k_cs: Vec<usize>,
    pub k_os: Vec<usize>,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spec.num_classes() != 2 {
            return Err(Error::Invalid("sweeps require a binary mixture".into()));
        }
        self.transition.binary_rates()?;
        for (name, len) in [
            ("zeta", self.zetas.len()),
            ("k_c", self.k_cs.len()),
            ("k_o", self.k_os.len()),
        ] {
            if len == 0 {
                return Err(Error::Invalid(format!("empty {name} grid")));
            }
        }
        if self.zetas.iter().any(|&z| !(z > 0.0 && z <= 1.0)) {
            return Err(Error::Invalid("zeta grid values must lie in (0, 1]".into()));
        }
        if self.k_cs.iter().chain(&self.k_os).any(|&k| k == 0) {
            return Err(Error::Invalid("neighbor counts must be >= 1".into()));
        }
        if self.n < 4 {
            return Err(Error::Invalid("n must be at least 4".into()));
        }
        if self.trials == 0 {
            return Err(Error::Invalid("trials must be >= 1".into()));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(f64, usize, usize)> {
        let mut cells = Vec::with_capacity(self.zetas.len() * self.k_cs.len() * self.k_os.len());
        for &zeta in &self.zetas {
            for &k_c in &self.k_cs {
                for &k_o in &self.k_os {
                    cells.push((zeta, k_c, k_o));
                }
            }
        }
        cells
    }
}

/// One grid cell evaluated on one seeded trial.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub zeta: f64,
    pub k_c: usize,
    pub k_o: usize,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub pool: usize,
    pub kept: usize,
    pub removed: usize,
    pub abundancy_ratio: f64,
    pub purity_kept: Option<f64>,
    pub purity_naive: f64,
    pub analytic_min_purity: Option<f64>,
    pub analytic_avg_purity: Option<f64>,
    pub connectivity: bool,
    pub isolation: bool,
    pub filtering: bool,
    pub bayes_kept: Option<f64>,
    pub bayes_naive: f64,
}

pub const SWEEP_CSV_HEADER: &str = "zeta,k_c,k_o,trial,seed,n,pool,kept,removed,\
abundancy_ratio,purity_kept,purity_naive,analytic_min_purity,analytic_avg_purity,\
connectivity,isolation,filtering,bayes_kept,bayes_naive";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.zeta,
            self.k_c,
            self.k_o,
            self.trial,
            self.seed,
            self.n,
            self.pool,
            self.kept,
            self.removed,
            self.abundancy_ratio,
            fmt_opt(self.purity_kept),
            self.purity_naive,
            fmt_opt(self.analytic_min_purity),
            fmt_opt(self.analytic_avg_purity),
            self.connectivity,
            self.isolation,
            self.filtering,
            fmt_opt(self.bayes_kept),
            self.bayes_naive,
        )
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, rows_to_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Per-cell aggregates over the shared trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub zeta: f64,
    pub k_c: usize,
    pub k_o: usize,
    pub mean_kept: f64,
    pub mean_abundancy_ratio: f64,
    pub mean_purity_kept: Option<f64>,
    pub mean_purity_naive: f64,
    pub mean_analytic_min_purity: Option<f64>,
    pub connectivity_rate: f64,
    pub isolation_rate: f64,
    pub filtering_rate: f64,
    pub mean_bayes_kept: Option<f64>,
    pub mean_bayes_naive: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rng_algorithm: String,
    pub spec_sha256: String,
    pub transition: Vec<Vec<f64>>,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub zetas: Vec<f64>,
    pub k_cs: Vec<usize>,
    pub k_os: Vec<usize>,
    /// Spread (max minus min) of the per-cell mean kept purity, over cells
    /// where every trial kept at least one point.
    pub purity_spread: Option<f64>,
    pub cells: Vec<CellSummary>,
}

impl SweepSummary {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("cannot serialize sweep summary: {e}")))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

pub struct SweepOutput {
    pub summary: SweepSummary,
    pub rows: Vec<SweepRow>,
}

struct TrialData {
    seed: u64,
    ds: Dataset,
    truth: Vec<u32>,
    max_clean: Vec<f64>,
    /// Per point, per class: inside that class's positive noisy-posterior
    /// band (zeta-independent).
    positive: Vec<[bool; 2]>,
    bayes: Vec<u32>,
}

fn prepare_trial(config: &SweepConfig, posterior: &MixturePosterior, t: usize) -> Result<TrialData> {
    let seed = rng::mix(config.seed, t as u64);
    let clean = sample_mixture(&config.spec, config.n, rng::mix(seed, 0))?;
    let truth = clean.true_labels().expect("sampler sets true labels").to_vec();
    let noisy = inject_noise(&truth, &config.transition, rng::mix(seed, 1))?;
    let ds = clean.with_noisy_labels(noisy)?;
    let mut max_clean = Vec::with_capacity(config.n);
    let mut positive = Vec::with_capacity(config.n);
    let mut bayes = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let x: Vec<f64> = ds.row(i).iter().map(|&v| v as f64).collect();
        let eval = posterior.eval(&x);
        let tags = region_membership(&eval.clean, &config.transition, config.zetas[0])?;
        max_clean.push(tags.max_clean);
        positive.push([
            tags.class_tags[0] == Region::Positive,
            tags.class_tags[1] == Region::Positive,
        ]);
        bayes.push(bayes_classifier(&eval.clean));
    }
    Ok(TrialData { seed, ds, truth, max_clean, positive, bayes })
}

/// Evaluate every grid cell over shared seeded trials. Rows come out grouped
/// by cell in grid order (zeta outermost), trials in order within each cell.
///
/// Work is factored so each trial builds one kNN graph per `k_c` and one
/// pool-neighbor table per `(k_c, k_o)`; the zeta axis only re-thresholds
/// vote ratios and level sets, so wide zeta grids cost almost nothing extra.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    config.validate()?;
    let posterior = MixturePosterior::new(&config.spec)?;
    let (t01, t10) = config.transition.binary_rates()?;
    let trial_data = {
        let results = par::map_indexed(config.trials, |t| prepare_trial(config, &posterior, t));
        let mut data = Vec::with_capacity(config.trials);
        for r in results {
            data.push(r?);
        }
        data
    };

    let cells = config.cells();
    let mut rows_by_cell: Vec<Vec<SweepRow>> = vec![Vec::with_capacity(config.trials); cells.len()];
    for (trial, td) in trial_data.iter().enumerate() {
        let noisy = td.ds.noisy_labels();
        let all: Vec<usize> = (0..config.n).collect();
        let purity_naive = empirical_purity(&all, &td.truth, noisy)?;
        let bayes_naive = bayes_consistency(&all, noisy, &td.bayes)?;
        for (kci, &k_c) in config.k_cs.iter().enumerate() {
            let table = knn_search(
                td.ds.features(),
                k_c.min(config.n - 1),
                None,
                None,
                SearchStrategy::Auto,
            )?;
            let graph = build_symmetric_graph(&table);
            let cc = topo_cc_with_graph(&td.ds, &graph)?;
            let subs = [
                induce_class_subgraph(&graph, noisy, 0)?,
                induce_class_subgraph(&graph, noisy, 1)?,
            ];
            for (koi, &k_o) in config.k_os.iter().enumerate() {
                let ratios = vote_ratios(&td.ds, &cc.kept, k_o)?;
                for (zi, &zeta) in config.zetas.iter().enumerate() {
                    let ci = (zi * config.k_cs.len() + kci) * config.k_os.len() + koi;
                    let (kept, removed) = partition_by_ratio(&cc.kept, &ratios, zeta);
                    let zp = zeta_prime(zeta, t01, t10);

                    let mut connectivity = true;
                    let mut isolation = true;
                    for (ci_class, sub) in subs.iter().enumerate() {
                        let class = ci_class as u32;
                        let members: Vec<usize> = (0..config.n)
                            .filter(|&i| {
                                noisy[i] == class
                                    && td.max_clean[i] >= zeta
                                    && td.positive[i][ci_class]
                            })
                            .collect();
                        let complement: Vec<usize> = (0..config.n)
                            .filter(|&i| noisy[i] == class && td.max_clean[i] < zp)
                            .collect();
                        connectivity &= check_connectivity(sub, &members);
                        isolation &= check_isolation(sub, &members, &complement);
                    }
                    let below: Vec<bool> = td.max_clean.iter().map(|&m| m < zp).collect();
                    let filtering = check_filtering(&kept, &below);

                    let (purity_kept, analytic_min, analytic_avg, bayes_kept) = if kept.is_empty()
                    {
                        (None, None, None, None)
                    } else {
                        let (min_p, avg_p) =
                            analytic_purities(&td.ds, &kept, &posterior, &config.transition)?;
                        (
                            Some(empirical_purity(&kept, &td.truth, noisy)?),
                            Some(min_p),
                            Some(avg_p),
                            Some(bayes_consistency(&kept, noisy, &td.bayes)?),
                        )
                    };

                    rows_by_cell[ci].push(SweepRow {
                        zeta,
                        k_c,
                        k_o,
                        trial,
                        seed: td.seed,
                        n: config.n,
                        pool: cc.kept.len(),
                        kept: kept.len(),
                        removed: removed.len(),
                        abundancy_ratio: kept.len() as f64 / config.n as f64,
                        purity_kept,
                        purity_naive,
                        analytic_min_purity: analytic_min,
                        analytic_avg_purity: analytic_avg,
                        connectivity,
                        isolation,
                        filtering,
                        bayes_kept,
                        bayes_naive,
                    });
                }
            }
        }
    }
    let rows: Vec<SweepRow> = rows_by_cell.into_iter().flatten().collect();

    let trials = config.trials as f64;
    let cell_summaries: Vec<CellSummary> = rows
        .chunks(config.trials)
        .map(|chunk| {
            let mean_opt = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Option<f64> {
                chunk
                    .iter()
                    .map(f)
                    .sum::<Option<f64>>()
                    .map(|s| s / trials)
            };
            CellSummary {
                zeta: chunk[0].zeta,
                k_c: chunk[0].k_c,
                k_o: chunk[0].k_o,
                mean_kept: chunk.iter().map(|r| r.kept as f64).sum::<f64>() / trials,
                mean_abundancy_ratio: chunk.iter().map(|r| r.abundancy_ratio).sum::<f64>() / trials,
                mean_purity_kept: mean_opt(&|r| r.purity_kept),
                mean_purity_naive: chunk.iter().map(|r| r.purity_naive).sum::<f64>() / trials,
                mean_analytic_min_purity: mean_opt(&|r| r.analytic_min_purity),
                connectivity_rate: chunk.iter().filter(|r| r.connectivity).count() as f64 / trials,
                isolation_rate: chunk.iter().filter(|r| r.isolation).count() as f64 / trials,
                filtering_rate: chunk.iter().filter(|r| r.filtering).count() as f64 / trials,
                mean_bayes_kept: mean_opt(&|r| r.bayes_kept),
                mean_bayes_naive: chunk.iter().map(|r| r.bayes_naive).sum::<f64>() / trials,
            }
        })
        .collect();

    let kept_means: Vec<f64> = cell_summaries
        .iter()
        .filter_map(|c| c.mean_purity_kept)
        .collect();
    let purity_spread = if kept_means.len() == cell_summaries.len() && !kept_means.is_empty() {
        let max = kept_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = kept_means.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max - min)
    } else {
        None
    };

    let summary = SweepSummary {
        rng_algorithm: rng::RNG_ALGORITHM.to_string(),
        spec_sha256: spec_fingerprint(&config.spec),
        transition: config.transition.rows(),
        n: config.n,
        trials: config.trials,
        seed: config.seed,
        zetas: config.zetas.clone(),
        k_cs: config.k_cs.clone(),
        k_os: config.k_os.clone(),
        purity_spread,
        cells: cell_summaries,
    };
    Ok(SweepOutput { summary, rows })
}
