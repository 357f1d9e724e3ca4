//! Synthetic Gaussian-mixture generation with analytically computable
//! posteriors, plus the posterior-derived quantities the validation harness
//! needs: noisy posteriors, level-set measures, and region tags.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::filter::RepresentationProvider;
use crate::noise::TransitionMatrix;
use crate::{par, rng};

/// Redraw a sample if any coordinate lands beyond this many marginal standard
/// deviations from its component mean.
pub const TRUNCATION_SIGMA: f64 = 6.0;
/// Quadrature and box bounds extend slightly past the truncation radius.
const BOX_SIGMA: f64 = 6.5;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;
const MAX_REDRAWS: usize = 1000;
/// Below this log-density the point is flagged as far-tail.
const FAR_TAIL_LOG_DENSITY: f64 = -700.0;

#[derive(Debug, Clone, Deserialize)]
pub struct MixtureComponent {
    pub class: u32,
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Full covariance matrix, row-major rows.
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(try_from = "SpecToml")]
pub struct MixtureSpec {
    components: Vec<MixtureComponent>,
    dim: usize,
    num_classes: usize,
}

#[derive(Deserialize)]
struct SpecToml {
    components: Vec<MixtureComponent>,
}

impl TryFrom<SpecToml> for MixtureSpec {
    type Error = Error;

    fn try_from(raw: SpecToml) -> Result<Self> {
        MixtureSpec::new(raw.components)
    }
}

impl MixtureSpec {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Invalid("mixture needs at least one component".into()));
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return Err(Error::Invalid("component means must be non-empty".into()));
        }
        let mut weight_sum = 0.0;
        for (ci, comp) in components.iter().enumerate() {
            if comp.mean.len() != dim {
                return Err(Error::Invalid(format!(
                    "component {ci}: mean has {} entries, expected {dim}",
                    comp.mean.len()
                )));
            }
            if !(comp.weight > 0.0 && comp.weight.is_finite()) {
                return Err(Error::Invalid(format!(
                    "component {ci}: weight {} must be positive",
                    comp.weight
                )));
            }
            if comp.cov.len() != dim || comp.cov.iter().any(|row| row.len() != dim) {
                return Err(Error::Invalid(format!(
                    "component {ci}: covariance must be {dim}x{dim}"
                )));
            }
            for i in 0..dim {
                for j in 0..dim {
                    let (a, b) = (comp.cov[i][j], comp.cov[j][i]);
                    if !a.is_finite() {
                        return Err(Error::Invalid(format!(
                            "component {ci}: covariance entry ({i},{j}) is not finite"
                        )));
                    }
                    if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                        return Err(Error::Invalid(format!(
                            "component {ci}: covariance is not symmetric at ({i},{j})"
                        )));
                    }
                }
            }
            cholesky(&comp.cov, dim).map_err(|e| {
                Error::Invalid(format!("component {ci}: {e}"))
            })?;
            weight_sum += comp.weight;
        }
        if (weight_sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Invalid(format!(
                "component weights sum to {weight_sum}, expected 1"
            )));
        }
        let num_classes = components.iter().map(|c| c.class).max().unwrap() as usize + 1;
        for class in 0..num_classes as u32 {
            if !components.iter().any(|c| c.class == class) {
                return Err(Error::Invalid(format!("class {class} has no component")));
            }
        }
        Ok(MixtureSpec {
            components,
            dim,
            num_classes,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("mixture spec: {e}")))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Classes represented by more than one component; for these, a single
    /// class can occupy several disjoint high-density regions.
    pub fn multi_component_classes(&self) -> Vec<u32> {
        (0..self.num_classes as u32)
            .filter(|&class| self.components.iter().filter(|c| c.class == class).count() > 1)
            .collect()
    }
}

pub fn load_mixture_spec(path: impl AsRef<Path>) -> Result<MixtureSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MixtureSpec::from_toml_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Lower-triangular Cholesky factor, row-major; fails on non-positive-definite
/// input.
fn cholesky(cov: &[Vec<f64>], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0f64; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = cov[i][j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Invalid(
                        "covariance is not positive definite".into(),
                    ));
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Ok(l)
}

fn lower_mat_vec(l: &[f64], d: usize, z: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|i| (0..=i).map(|j| l[i * d + j] * z[j]).sum())
        .collect()
}

/// Forward substitution `L y = rhs`.
fn solve_lower(l: &[f64], d: usize, rhs: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0f64; d];
    for i in 0..d {
        let mut sum = rhs[i];
        for j in 0..i {
            sum -= l[i * d + j] * y[j];
        }
        y[i] = sum / l[i * d + i];
    }
    y
}

struct PreparedComponent {
    class: u32,
    mean: Vec<f64>,
    chol: Vec<f64>,
    marginal_std: Vec<f64>,
    log_weight: f64,
    log_det: f64,
    cum_weight: f64,
}

fn prepare(spec: &MixtureSpec) -> Result<Vec<PreparedComponent>> {
    let d = spec.dim();
    let mut cum = 0.0;
    spec.components()
        .iter()
        .map(|comp| {
            let chol = cholesky(&comp.cov, d)?;
            let log_det = 2.0 * (0..d).map(|i| chol[i * d + i].ln()).sum::<f64>();
            cum += comp.weight;
            Ok(PreparedComponent {
                class: comp.class,
                mean: comp.mean.clone(),
                marginal_std: (0..d).map(|a| comp.cov[a][a].sqrt()).collect(),
                chol,
                log_weight: comp.weight.ln(),
                log_det,
                cum_weight: cum,
            })
        })
        .collect()
}

/// Per-point evaluator for the mixture density and clean class posterior.
pub struct MixturePosterior {
    comps: Vec<PreparedComponent>,
    dim: usize,
    num_classes: usize,
}

/// Clean posterior at one point. `far_tail` flags points so deep in the tails
/// that every component density underflows meaningfully; the posterior is
/// still returned (uniform in the fully degenerate case).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEval {
    pub clean: Vec<f64>,
    pub far_tail: bool,
}

impl MixturePosterior {
    pub fn new(spec: &MixtureSpec) -> Result<Self> {
        Ok(MixturePosterior {
            comps: prepare(spec)?,
            dim: spec.dim(),
            num_classes: spec.num_classes(),
        })
    }

    fn comp_log_densities(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.comps
            .iter()
            .map(|c| {
                let centered: Vec<f64> = (0..d).map(|a| x[a] - c.mean[a]).collect();
                let y = solve_lower(&c.chol, d, &centered);
                let quad: f64 = y.iter().map(|v| v * v).sum();
                c.log_weight - 0.5 * (quad + c.log_det + d as f64 * ln_2pi)
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> PosteriorEval {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        let logs = self.comp_log_densities(x);
        let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut per_class = vec![0.0f64; self.num_classes];
        let mut total = 0.0;
        if max_log.is_finite() {
            for (c, &lw) in self.comps.iter().zip(&logs) {
                let w = (lw - max_log).exp();
                per_class[c.class as usize] += w;
                total += w;
            }
        }
        if total > 0.0 {
            for p in &mut per_class {
                *p /= total;
            }
        } else {
            per_class.fill(1.0 / self.num_classes as f64);
        }
        PosteriorEval {
            clean: per_class,
            far_tail: max_log < FAR_TAIL_LOG_DENSITY,
        }
    }

    /// Mixture density at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.comp_log_densities(x).iter().map(|lw| lw.exp()).sum()
    }
}

fn draw_sample(
    comps: &[PreparedComponent],
    d: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, u32)> {
    let u: f64 = rng.gen();
    let ci = comps
        .iter()
        .position(|c| u < c.cum_weight)
        .unwrap_or(comps.len() - 1);
    let comp = &comps[ci];
    for _ in 0..MAX_REDRAWS {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let offset = lower_mat_vec(&comp.chol, d, &z);
        let x: Vec<f64> = (0..d).map(|a| comp.mean[a] + offset[a]).collect();
        let inside = (0..d)
            .all(|a| (x[a] - comp.mean[a]).abs() <= TRUNCATION_SIGMA * comp.marginal_std[a]);
        if inside {
            return Ok((x, comp.class));
        }
    }
    Err(Error::Invalid(format!(
        "gave up after {MAX_REDRAWS} truncation redraws"
    )))
}

/// Draw `n` samples from the mixture, truncated at six marginal standard
/// deviations per axis. True labels are the component classes; noisy labels
/// start out identical. Each sample uses its own seeded substream, so results
/// are independent of thread count.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Invalid("cannot sample an empty dataset".into()));
    }
    let comps = prepare(spec)?;
    let d = spec.dim();
    let rows = par::map_indexed(n, |i| {
        let mut r = rng::substream(seed, i as u64);
        draw_sample(&comps, d, &mut r)
    });
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for row in rows {
        let (x, class) = row?;
        features.extend(x.iter().map(|&v| v as f32));
        labels.push(class);
    }
    Dataset::new(
        features,
        d,
        labels.clone(),
        Some(labels),
        Some(spec.num_classes()),
    )
}

/// Posterior over observed labels: `noisy[j] = sum_i T[i][j] * clean[i]`.
pub fn noisy_posterior(clean: &[f64], t: &TransitionMatrix) -> Result<Vec<f64>> {
    let c = t.num_classes();
    if clean.len() != c {
        return Err(Error::Invalid(format!(
            "posterior has {} classes, transition matrix has {c}",
            clean.len()
        )));
    }
    Ok((0..c)
        .map(|j| (0..c).map(|i| t.get(i, j) * clean[i]).sum())
        .collect())
}

/// Effective vote threshold after noise: halfway between `zeta` and the
/// worst-case noisy-posterior ceiling `(1 + |t10 - t01|) / 2`.
pub fn zeta_prime(zeta: f64, t01: f64, t10: f64) -> f64 {
    (zeta + (1.0 + (t10 - t01).abs()) / 2.0) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Positive,
    Negative,
    Boundary,
}

/// Point classification against the level sets and per-class noisy-posterior
/// bands (binary mixtures only).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTags {
    pub max_clean: f64,
    pub zeta_prime: f64,
    /// max clean posterior >= zeta.
    pub in_l_zeta: bool,
    /// max clean posterior >= zeta'.
    pub in_l_zeta_prime: bool,
    pub class_tags: Vec<Region>,
}

/// Tag a point by its clean posterior: level-set membership at `zeta` and
/// `zeta'`, and per-class confidence bands of the noisy posterior. The band
/// for class `i` spans between 1/2 and `(1 + t[i][1-i] - t[1-i][i]) / 2`,
/// endpoints included.
pub fn region_membership(clean: &[f64], t: &TransitionMatrix, zeta: f64) -> Result<RegionTags> {
    if t.num_classes() != 2 || clean.len() != 2 {
        return Err(Error::Invalid(
            "region tagging is defined for binary mixtures".into(),
        ));
    }
    let (t01, t10) = t.binary_rates()?;
    let noisy = noisy_posterior(clean, t)?;
    let max_clean = clean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let zp = zeta_prime(zeta, t01, t10);
    let class_tags = (0..2)
        .map(|i| {
            let cross = (1.0 + t.get(i, 1 - i) - t.get(1 - i, i)) / 2.0;
            let (lower, upper) = (cross.min(0.5), cross.max(0.5));
            if noisy[i] > upper {
                Region::Positive
            } else if noisy[i] < lower {
                Region::Negative
            } else {
                Region::Boundary
            }
        })
        .collect();
    Ok(RegionTags {
        max_clean,
        zeta_prime: zp,
        in_l_zeta: max_clean >= zeta,
        in_l_zeta_prime: max_clean >= zp,
        class_tags,
    })
}

/// Most probable class under the given posterior; ties go to the lower index.
pub fn bayes_classifier(posterior: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &p) in posterior.iter().enumerate().skip(1) {
        if p > posterior[best] {
            best = i;
        }
    }
    best as u32
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LevelSetEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of the mixture mass whose max clean posterior is at
/// least `t`, using the same truncated sampler as `sample_mixture`.
pub fn measure_level_set(
    spec: &MixtureSpec,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<LevelSetEstimate> {
    if samples == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Invalid(format!("level {t} outside (0, 1]")));
    }
    let comps = prepare(spec)?;
    let posterior = MixturePosterior::new(spec)?;
    let d = spec.dim();
    let hits = par::map_indexed(samples, |i| {
        let mut r = rng::substream(seed, i as u64);
        draw_sample(&comps, d, &mut r).map(|(x, _)| {
            let eval = posterior.eval(&x);
            eval.clean.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= t
        })
    });
    let mut inside = 0usize;
    for h in hits {
        if h? {
            inside += 1;
        }
    }
    let p = inside as f64 / samples as f64;
    // Agresti-Coull adjusted proportion for the width, so all-hit or all-miss
    // draws still report a nonzero uncertainty instead of a degenerate zero.
    let adjusted = (inside as f64 + 2.0) / (samples as f64 + 4.0);
    Ok(LevelSetEstimate {
        estimate: p,
        std_error: (adjusted * (1.0 - adjusted) / (samples as f64 + 4.0)).sqrt(),
        samples,
    })
}

/// Deterministic midpoint-rule integral of the same level-set mass over a
/// box extending 6.5 marginal standard deviations past every component mean.
/// Two-dimensional mixtures only; `grid` is the number of cells per axis.
pub fn measure_level_set_quadrature(spec: &MixtureSpec, t: f64, grid: usize) -> Result<f64> {
    if spec.dim() != 2 {
        return Err(Error::Invalid(format!(
            "quadrature supports 2-d mixtures, got d = {}",
            spec.dim()
        )));
    }
    if grid < 2 {
        return Err(Error::Invalid("quadrature grid must be at least 2".into()));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Invalid(format!("level {t} outside (0, 1]")));
    }
    let posterior = MixturePosterior::new(spec)?;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for comp in spec.components() {
        for a in 0..2 {
            let sigma = comp.cov[a][a].sqrt();
            lo[a] = lo[a].min(comp.mean[a] - BOX_SIGMA * sigma);
            hi[a] = hi[a].max(comp.mean[a] + BOX_SIGMA * sigma);
        }
    }
    let step = [(hi[0] - lo[0]) / grid as f64, (hi[1] - lo[1]) / grid as f64];
    let row_sums = par::map_indexed(grid, |iy| {
        let y = lo[1] + (iy as f64 + 0.5) * step[1];
        let mut sum = 0.0;
        for ix in 0..grid {
            let x = [lo[0] + (ix as f64 + 0.5) * step[0], y];
            let eval = posterior.eval(&x);
            let max_clean = eval.clean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max_clean >= t {
                sum += posterior.density(&x);
            }
        }
        sum
    });
    Ok(row_sums.iter().sum::<f64>() * step[0] * step[1])
}

/// Re-samples nothing across rounds: one fixed set of latent draws, with the
/// component means scaled per round. Growing scales pull the classes apart
/// while every point keeps its component and within-component offset.
pub struct SeparationProvider {
    means: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    offsets: Vec<Vec<f64>>,
    classes: Vec<u32>,
    scales: Vec<f64>,
    dim: usize,
}

impl SeparationProvider {
    /// Latent draws are untruncated so every round is a rigid transformation
    /// of the same randomness.
    pub fn new(spec: &MixtureSpec, n: usize, seed: u64, scales: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("need at least one sample".into()));
        }
        if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Invalid("scales must be positive and non-empty".into()));
        }
        let comps = prepare(spec)?;
        let d = spec.dim();
        let drawn = par::map_indexed(n, |i| {
            let mut r = rng::substream(seed, i as u64);
            let u: f64 = r.gen();
            let ci = comps
                .iter()
                .position(|c| u < c.cum_weight)
                .unwrap_or(comps.len() - 1);
            let z: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            (ci, lower_mat_vec(&comps[ci].chol, d, &z))
        });
        let mut assignment = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        let mut classes = Vec::with_capacity(n);
        for (ci, offset) in drawn {
            classes.push(comps[ci].class);
            assignment.push(ci);
            offsets.push(offset);
        }
        Ok(SeparationProvider {
            means: comps.iter().map(|c| c.mean.clone()).collect(),
            assignment,
            offsets,
            classes,
            scales,
            dim: d,
        })
    }

    pub fn true_labels(&self) -> &[u32] {
        &self.classes
    }
}

impl RepresentationProvider for SeparationProvider {
    fn num_samples(&self) -> usize {
        self.assignment.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn features_for_round(&mut self, round: usize) -> Result<Vec<f32>> {
        let scale = self.scales[round.min(self.scales.len() - 1)];
        let mut out = Vec::with_capacity(self.assignment.len() * self.dim);
        for (i, &ci) in self.assignment.iter().enumerate() {
            let mean = &self.means[ci];
            for a in 0..self.dim {
                out.push((scale * mean[a] + self.offsets[i][a]) as f32);
            }
        }
        Ok(out)
    }
}
