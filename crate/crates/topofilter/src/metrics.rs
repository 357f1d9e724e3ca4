//! Purity and abundancy metrics, closed-form purity bounds, the per-class
//! graph predicates behind the selection guarantees, and the trial harness
//! that measures all of them on synthetic mixtures.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::components::connected_components;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::filter::{topo_filter_with_graph, FilterParams};
use crate::knn::{build_symmetric_graph, induce_class_subgraph, knn_search, ClassSubgraph, SearchStrategy};
use crate::noise::{inject_noise, TransitionMatrix};
use crate::synth::{
    bayes_classifier, measure_level_set, noisy_posterior, region_membership, sample_mixture,
    zeta_prime, LevelSetEstimate, MixturePosterior, MixtureSpec, Region,
};
use crate::{par, rng};

/// The two closed forms of the minimum-purity bound must agree this tightly.
pub const G1_FORM_TOLERANCE: f64 = 1e-12;

/// Fraction of `kept` whose noisy label equals the true label.
pub fn empirical_purity(kept: &[usize], true_labels: &[u32], noisy_labels: &[u32]) -> Result<f64> {
    if kept.is_empty() {
        return Err(Error::Invalid("empty kept set".into()));
    }
    let clean = kept
        .iter()
        .filter(|&&i| true_labels[i] == noisy_labels[i])
        .count();
    Ok(clean as f64 / kept.len() as f64)
}

/// Worst-point and per-class-mean analytic purity of a kept set under a
/// binary mixture. Each point contributes `t[i][i] * eta_i / noisy_eta_i`
/// with `i` its noisy label; the average sums the per-class means.
pub fn analytic_purities(
    ds: &Dataset,
    kept: &[usize],
    posterior: &MixturePosterior,
    t: &TransitionMatrix,
) -> Result<(f64, f64)> {
    if t.num_classes() != 2 {
        return Err(Error::Invalid(
            "analytic purity is defined for binary noise".into(),
        ));
    }
    if kept.is_empty() {
        return Err(Error::Invalid("empty kept set".into()));
    }
    let labels = ds.noisy_labels();
    let per_point = par::map_indexed(kept.len(), |r| {
        let idx = kept[r];
        let x: Vec<f64> = ds.row(idx).iter().map(|&v| v as f64).collect();
        let eval = posterior.eval(&x);
        let noisy = noisy_posterior(&eval.clean, t).expect("binary checked above");
        let i = labels[idx] as usize;
        if noisy[i] <= 0.0 {
            0.0
        } else {
            (t.get(i, i) * eval.clean[i] / noisy[i]).min(1.0)
        }
    });
    let mut min = f64::INFINITY;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (r, &p) in per_point.iter().enumerate() {
        min = min.min(p);
        let i = labels[kept[r]] as usize;
        sums[i] += p;
        counts[i] += 1;
    }
    let avg = (0..2)
        .filter(|&i| counts[i] > 0)
        .map(|i| sums[i] / counts[i] as f64)
        .sum();
    Ok((min, avg))
}

fn validate_binary_rates(zeta: f64, t01: f64, t10: f64) -> Result<()> {
    for (name, v) in [("tau01", t01), ("tau10", t10)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::Invalid(format!("{name} = {v} outside [0, 1)")));
        }
    }
    if t01 + t10 >= 1.0 {
        return Err(Error::Invalid(format!(
            "tau01 + tau10 = {} must be below 1",
            t01 + t10
        )));
    }
    let floor = (1.0 + (t10 - t01).abs()) / 2.0;
    if !(zeta > floor && zeta <= 1.0) {
        return Err(Error::Invalid(format!(
            "zeta = {zeta} must lie in ({floor}, 1]"
        )));
    }
    Ok(())
}

/// Both closed forms of the binary minimum-purity lower bound: the headline
/// form in terms of `2*zeta + 1 + |t10 - t01|` and the equivalent form in
/// terms of `zeta'`. Returned as (headline, zeta'-form).
pub fn g1_lower_bound_forms(zeta: f64, t01: f64, t10: f64) -> Result<(f64, f64)> {
    validate_binary_rates(zeta, t01, t10)?;
    let gap = (t10 - t01).abs();
    let tau_max = t10.max(t01);
    let tau_ii_min = (1.0 - t10).min(1.0 - t01);
    let span = 2.0 * zeta + 1.0 + gap;
    let headline = (span - 4.0 * tau_max) * tau_ii_min / (span * (1.0 - t01 - t10));
    let zp = zeta_prime(zeta, t01, t10);
    let from_zp = (zp - tau_max) * tau_ii_min / (zp * (1.0 - t01 - t10));
    Ok((headline, from_zp))
}

/// Binary minimum-purity lower bound; the two algebraic forms are checked
/// against each other before one is returned.
pub fn g1_lower_bound(zeta: f64, t01: f64, t10: f64) -> Result<f64> {
    let (headline, from_zp) = g1_lower_bound_forms(zeta, t01, t10)?;
    if (headline - from_zp).abs() > G1_FORM_TOLERANCE * headline.abs().max(1.0) {
        return Err(Error::Invalid(format!(
            "purity bound forms disagree: {headline} vs {from_zp}"
        )));
    }
    Ok(from_zp)
}

/// Minimum-purity bound refined by per-class posterior floors
/// `a_i = min_x eta_i(x)`. A class with no incoming noise is exactly pure, so
/// its term is 1.
pub fn general_min_purity_bound(
    zeta: f64,
    t01: f64,
    t10: f64,
    a0: f64,
    a1: f64,
) -> Result<f64> {
    validate_binary_rates(zeta, t01, t10)?;
    for (name, a) in [("a0", a0), ("a1", a1)] {
        if !(0.0..0.5).contains(&a) {
            return Err(Error::Invalid(format!("{name} = {a} outside [0, 0.5)")));
        }
    }
    let zp = zeta_prime(zeta, t01, t10);
    let retained = 1.0 - t01 - t10;
    let term = |tau_out: f64, tau_in: f64, a: f64| -> f64 {
        if tau_in == 0.0 {
            return 1.0;
        }
        let a_tilde = retained * a + tau_in;
        (1.0 - tau_out) * tau_in * (zp - a_tilde) / (retained * zp * a_tilde)
    };
    Ok(term(t01, t10, a0).min(term(t10, t01, a1)))
}

/// True iff every member lies in one connected component of the subgraph.
/// Members are global sample indices; fewer than two members is vacuously
/// connected.
pub fn check_connectivity(sub: &ClassSubgraph, members: &[usize]) -> bool {
    let locals: Vec<usize> = members.iter().filter_map(|&g| sub.local_of(g)).collect();
    if locals.len() < 2 {
        return true;
    }
    let labeling = connected_components(sub);
    let first = labeling.id_of(locals[0]);
    locals.iter().all(|&l| labeling.id_of(l) == first)
}

/// True iff no subgraph edge joins `set_a` to `set_b` (global indices).
pub fn check_isolation(sub: &ClassSubgraph, set_a: &[usize], set_b: &[usize]) -> bool {
    let mut in_b = vec![false; sub.num_vertices()];
    for &g in set_b {
        if let Some(l) = sub.local_of(g) {
            in_b[l] = true;
        }
    }
    set_a
        .iter()
        .filter_map(|&g| sub.local_of(g))
        .all(|l| sub.local_neighbors(l).iter().all(|&nb| !in_b[nb]))
}

/// True iff no kept index is flagged as lying below the filter level.
pub fn check_filtering(kept: &[usize], below_level: &[bool]) -> bool {
    kept.iter().all(|&i| !below_level[i])
}

/// Directional comparison that degrades gracefully in the clean limit: when
/// the baseline is already perfect nothing can strictly beat it, so matching
/// it counts.
fn improved(kept: f64, baseline: f64) -> bool {
    if baseline >= 1.0 {
        kept >= baseline
    } else {
        kept > baseline
    }
}

/// Fraction of kept points whose noisy label matches the Bayes label.
pub fn bayes_consistency(kept: &[usize], noisy: &[u32], bayes: &[u32]) -> Result<f64> {
    if kept.is_empty() {
        return Err(Error::Invalid("empty kept set".into()));
    }
    let agree = kept.iter().filter(|&&i| noisy[i] == bayes[i]).count();
    Ok(agree as f64 / kept.len() as f64)
}

/// Neighbor count of the form `round(c * ln(n)^q)` (natural log), clamped to
/// `[1, n-1]`.
pub fn k_from_schedule(c: f64, q: f64, n: usize) -> usize {
    let raw = (c * (n as f64).ln().powf(q)).round();
    let max = (n - 1).max(1);
    (raw as usize).clamp(1, max)
}

/// Purity of a kept set and of the keep-everything baseline, empirical and
/// analytic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub empirical_clean_fraction: f64,
    pub analytic_min_purity: Option<f64>,
    pub analytic_avg_purity: Option<f64>,
    pub baseline_empirical_clean_fraction: f64,
    pub baseline_analytic_min_purity: Option<f64>,
    pub baseline_analytic_avg_purity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// Size of the post-component candidate pool.
    pub pool: usize,
    pub kept: usize,
    pub removed: usize,
    pub abundancy_ratio: f64,
    /// Whether `abundancy_ratio >= mu(L(zeta)) - 2 * stderr`.
    pub abundancy_ok: bool,
    pub connectivity: bool,
    pub isolation: bool,
    pub filtering: bool,
    pub purity: PurityReport,
    pub bayes_kept: f64,
    pub bayes_naive: f64,
    /// Per-class minimum clean posterior observed in this trial's sample.
    pub min_clean: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TheoremSuiteConfig {
    pub spec: MixtureSpec,
    pub transition: TransitionMatrix,
    pub zeta: f64,
    pub k_o: usize,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub schedule_c: f64,
    pub schedule_q: f64,
    pub mc_samples: usize,
    /// Failure budget: each predicate must hold in a fraction `1 - delta` of
    /// trials, and per-trial Bayes agreement must reach `1 - delta`.
    pub delta: f64,
}

impl TheoremSuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spec.num_classes() != 2 {
            return Err(Error::Invalid(
                "the validation harness requires a binary mixture".into(),
            ));
        }
        self.transition.binary_rates()?;
        if self.trials < 10 {
            return Err(Error::Invalid(format!(
                "need at least 10 trials, got {}",
                self.trials
            )));
        }
        if self.n < 4 {
            return Err(Error::Invalid("n must be at least 4".into()));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::Invalid(format!(
                "zeta = {} outside (0, 1]",
                self.zeta
            )));
        }
        if self.k_o == 0 {
            return Err(Error::Invalid("k_o must be >= 1".into()));
        }
        if !(self.schedule_c > 0.0) {
            return Err(Error::Invalid("schedule c must be positive".into()));
        }
        if self.schedule_q <= 1.0 {
            log::warn!(
                "schedule exponent q = {} is at or below 1; the guarantees assume q > 1",
                self.schedule_q
            );
        }
        if self.mc_samples < 100 {
            return Err(Error::Invalid("mc_samples must be at least 100".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Invalid(format!(
                "delta = {} outside (0, 1)",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub rng_algorithm: String,
    pub spec_sha256: String,
    pub transition: Vec<Vec<f64>>,
    pub n: usize,
    pub trials: usize,
    pub zeta: f64,
    pub zeta_prime: f64,
    pub k_c: usize,
    pub k_o: usize,
    pub schedule_c: f64,
    pub schedule_q: f64,
    pub delta: f64,
    pub mc_samples: usize,
    pub seeds: Vec<u64>,
    pub multi_component_classes: Vec<u32>,
    pub mu_l_zeta: LevelSetEstimate,
    pub connectivity_rate: f64,
    pub isolation_rate: f64,
    pub filtering_rate: f64,
    pub abundancy_rate: f64,
    pub bayes_consistency_rate: f64,
    pub purity_improvement_rate: f64,
    pub min_purity_improvement_rate: f64,
    pub mean_abundancy_ratio: f64,
    pub mean_purity_kept: f64,
    pub mean_purity_naive: f64,
    pub mean_bayes_kept: f64,
    pub mean_bayes_naive: f64,
    pub g1_bound: Option<f64>,
    pub general_g1_bound: Option<f64>,
    pub trial_records: Vec<TrialRecord>,
}

impl TheoremReport {
    /// Names of the directional assertions that fell outside the delta
    /// budget. Connectivity is skipped for multi-component classes, whose
    /// per-class regions are legitimately disconnected.
    pub fn failed_assertions(&self) -> Vec<String> {
        let threshold = 1.0 - self.delta;
        let mut failed = Vec::new();
        let mut check = |name: &str, rate: f64| {
            if rate < threshold {
                failed.push(format!("{name} rate {rate:.3} < {threshold:.3}"));
            }
        };
        if self.multi_component_classes.is_empty() {
            check("connectivity", self.connectivity_rate);
        }
        check("isolation", self.isolation_rate);
        check("filtering", self.filtering_rate);
        check("abundancy", self.abundancy_rate);
        check("bayes_consistency", self.bayes_consistency_rate);
        check("purity_improvement", self.purity_improvement_rate);
        check("min_purity_improvement", self.min_purity_improvement_rate);
        failed
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("cannot serialize report: {e}")))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Content hash of a mixture spec: class ids, weights, means, and covariances
/// fed to SHA-256 in component order, floats as little-endian bit patterns.
pub fn spec_fingerprint(spec: &MixtureSpec) -> String {
    let mut hasher = Sha256::new();
    for comp in spec.components() {
        hasher.update(comp.class.to_le_bytes());
        hasher.update(comp.weight.to_bits().to_le_bytes());
        for &m in &comp.mean {
            hasher.update(m.to_bits().to_le_bytes());
        }
        for row in &comp.cov {
            for &v in row {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    use std::fmt::Write;
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

struct TrialOutcome {
    record: TrialRecord,
}

fn run_trial(config: &TheoremSuiteConfig, trial: usize, k_c: usize) -> Result<TrialOutcome> {
    let seed = rng::mix(config.seed, trial as u64);
    let sample_seed = rng::mix(seed, 0);
    let noise_seed = rng::mix(seed, 1);
    let ds_clean = sample_mixture(&config.spec, config.n, sample_seed)?;
    let true_labels = ds_clean.true_labels().expect("sampler sets true labels").to_vec();
    let noisy = inject_noise(&true_labels, &config.transition, noise_seed)?;
    let ds = ds_clean.with_noisy_labels(noisy)?;
    let noisy = ds.noisy_labels();

    let k = k_c.min(ds.n().saturating_sub(1)).max(1);
    let table = knn_search(ds.features(), k, None, None, SearchStrategy::Auto)?;
    let graph = build_symmetric_graph(&table);
    let selection = topo_filter_with_graph(
        &ds,
        &graph,
        &FilterParams {
            k_c,
            k_o: config.k_o,
            zeta: config.zeta,
            milestone: 1,
            period: 1,
        },
    )?;

    let posterior = MixturePosterior::new(&config.spec)?;
    let evals = par::map_indexed(ds.n(), |i| {
        let x: Vec<f64> = ds.row(i).iter().map(|&v| v as f64).collect();
        let eval = posterior.eval(&x);
        let tags = region_membership(&eval.clean, &config.transition, config.zeta)
            .expect("suite config is binary");
        (tags, bayes_classifier(&eval.clean), eval.clean)
    });
    let below_zp: Vec<bool> = evals.iter().map(|e| !e.0.in_l_zeta_prime).collect();
    let bayes: Vec<u32> = evals.iter().map(|e| e.1).collect();
    let mut min_clean = vec![f64::INFINITY; 2];
    for e in &evals {
        for i in 0..2 {
            min_clean[i] = min_clean[i].min(e.2[i]);
        }
    }

    // Member sets for the graph predicates: level-set points restricted to
    // the class's positive band, i.e. points whose own-class posterior clears
    // the threshold. Mislabeled points deep in the other class's bulk are
    // excluded; the isolation complement is the thin low-confidence band
    // below zeta'.
    let mut connectivity = true;
    let mut isolation = true;
    for class in 0..2u32 {
        let sub = induce_class_subgraph(&graph, noisy, class)?;
        let members: Vec<usize> = (0..ds.n())
            .filter(|&i| {
                noisy[i] == class
                    && evals[i].0.in_l_zeta
                    && evals[i].0.class_tags[class as usize] == Region::Positive
            })
            .collect();
        let complement: Vec<usize> = (0..ds.n())
            .filter(|&i| noisy[i] == class && below_zp[i])
            .collect();
        connectivity &= check_connectivity(&sub, &members);
        isolation &= check_isolation(&sub, &members, &complement);
    }
    let filtering = check_filtering(&selection.kept, &below_zp);

    let all: Vec<usize> = (0..ds.n()).collect();
    let purity = PurityReport {
        empirical_clean_fraction: empirical_purity(&selection.kept, &true_labels, noisy)?,
        baseline_empirical_clean_fraction: empirical_purity(&all, &true_labels, noisy)?,
        analytic_min_purity: None,
        analytic_avg_purity: None,
        baseline_analytic_min_purity: None,
        baseline_analytic_avg_purity: None,
    };
    let (min_kept, avg_kept) =
        analytic_purities(&ds, &selection.kept, &posterior, &config.transition)?;
    let (min_all, avg_all) = analytic_purities(&ds, &all, &posterior, &config.transition)?;
    let purity = PurityReport {
        analytic_min_purity: Some(min_kept),
        analytic_avg_purity: Some(avg_kept),
        baseline_analytic_min_purity: Some(min_all),
        baseline_analytic_avg_purity: Some(avg_all),
        ..purity
    };

    let record = TrialRecord {
        trial,
        seed,
        pool: selection.kept.len() + selection.outliers.len(),
        kept: selection.kept.len(),
        removed: selection.outliers.len(),
        abundancy_ratio: selection.kept.len() as f64 / ds.n() as f64,
        abundancy_ok: false,
        connectivity,
        isolation,
        filtering,
        purity,
        bayes_kept: bayes_consistency(&selection.kept, noisy, &bayes)?,
        bayes_naive: bayes_consistency(&all, noisy, &bayes)?,
        min_clean,
    };
    Ok(TrialOutcome { record })
}

/// Run the full validation harness: sample, corrupt, select, and score every
/// predicate over seeded trials, then aggregate against a Monte-Carlo
/// level-set measure.
pub fn run_theorem_suite(config: &TheoremSuiteConfig) -> Result<TheoremReport> {
    config.validate()?;
    let multi = config.spec.multi_component_classes();
    if !multi.is_empty() {
        log::warn!(
            "classes {multi:?} mix several components; their level sets may be \
             disconnected, so the connectivity assertion is excluded"
        );
    }
    let k_c = k_from_schedule(config.schedule_c, config.schedule_q, config.n);
    let outcomes = par::map_indexed(config.trials, |t| run_trial(config, t, k_c));
    let mut records = Vec::with_capacity(config.trials);
    for outcome in outcomes {
        records.push(outcome?.record);
    }

    let mu = measure_level_set(
        &config.spec,
        config.zeta,
        config.mc_samples,
        rng::mix(config.seed, u64::MAX - 1),
    )?;
    let mu_floor = mu.estimate - 2.0 * mu.std_error;
    for r in &mut records {
        r.abundancy_ok = r.abundancy_ratio >= mu_floor;
    }

    let trials = config.trials as f64;
    let rate = |f: &dyn Fn(&TrialRecord) -> bool| {
        records.iter().filter(|r| f(r)).count() as f64 / trials
    };
    let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
        records.iter().map(|r| f(r)).sum::<f64>() / trials
    };
    let (t01, t10) = config.transition.binary_rates()?;
    let threshold = 1.0 - config.delta;
    let a = [
        records.iter().map(|r| r.min_clean[0]).fold(f64::INFINITY, f64::min),
        records.iter().map(|r| r.min_clean[1]).fold(f64::INFINITY, f64::min),
    ];
    let general = general_min_purity_bound(config.zeta, t01, t10, a[0], a[1]).ok();

    Ok(TheoremReport {
        rng_algorithm: rng::RNG_ALGORITHM.to_string(),
        spec_sha256: spec_fingerprint(&config.spec),
        transition: config.transition.rows(),
        n: config.n,
        trials: config.trials,
        zeta: config.zeta,
        zeta_prime: zeta_prime(config.zeta, t01, t10),
        k_c,
        k_o: config.k_o,
        schedule_c: config.schedule_c,
        schedule_q: config.schedule_q,
        delta: config.delta,
        mc_samples: config.mc_samples,
        seeds: records.iter().map(|r| r.seed).collect(),
        multi_component_classes: config.spec.multi_component_classes(),
        mu_l_zeta: mu,
        connectivity_rate: rate(&|r| r.connectivity),
        isolation_rate: rate(&|r| r.isolation),
        filtering_rate: rate(&|r| r.filtering),
        abundancy_rate: rate(&|r| r.abundancy_ok),
        bayes_consistency_rate: rate(&|r| r.bayes_kept >= threshold),
        purity_improvement_rate: rate(&|r| {
            improved(
                r.purity.empirical_clean_fraction,
                r.purity.baseline_empirical_clean_fraction,
            )
        }),
        min_purity_improvement_rate: rate(&|r| {
            improved(
                r.purity.analytic_min_purity.unwrap_or(0.0),
                r.purity.baseline_analytic_min_purity.unwrap_or(1.0),
            )
        }),
        mean_abundancy_ratio: mean(&|r| r.abundancy_ratio),
        mean_purity_kept: mean(&|r| r.purity.empirical_clean_fraction),
        mean_purity_naive: mean(&|r| r.purity.baseline_empirical_clean_fraction),
        mean_bayes_kept: mean(&|r| r.bayes_kept),
        mean_bayes_naive: mean(&|r| r.bayes_naive),
        g1_bound: g1_lower_bound(config.zeta, t01, t10).ok(),
        general_g1_bound: general,
        trial_records: records,
    })
}
