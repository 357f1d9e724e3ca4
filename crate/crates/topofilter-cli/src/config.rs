//! Optional TOML config file. Each subcommand reads defaults from its own
//! section; values given on the command line always win.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use topofilter::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub theorem_check: TheoremSection,
    #[serde(default)]
    pub gen_synth: GenSynthSection,
    #[serde(default)]
    pub noise_inject: NoiseInjectSection,
    #[serde(default)]
    pub iterate: IterateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub true_labels: Option<PathBuf>,
    pub method: Option<String>,
    pub k_c: Option<usize>,
    pub k_o: Option<usize>,
    pub zeta: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub spec: Option<PathBuf>,
    pub tau: Option<f64>,
    pub transition: Option<PathBuf>,
    pub zetas: Option<Vec<f64>>,
    pub k_cs: Option<Vec<usize>>,
    pub k_os: Option<Vec<usize>>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out_csv: Option<PathBuf>,
    pub out_summary: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremSection {
    pub spec: Option<PathBuf>,
    pub tau: Option<f64>,
    pub transition: Option<PathBuf>,
    pub zeta: Option<f64>,
    pub k_o: Option<usize>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub schedule_c: Option<f64>,
    pub schedule_q: Option<f64>,
    pub mc_samples: Option<usize>,
    pub delta: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSynthSection {
    pub spec: Option<PathBuf>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub out_features: Option<PathBuf>,
    pub out_labels: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseInjectSection {
    pub labels: Option<PathBuf>,
    pub tau: Option<f64>,
    pub transition: Option<PathBuf>,
    pub num_classes: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateSection {
    pub features: Option<Vec<PathBuf>>,
    pub labels: Option<PathBuf>,
    pub rounds: Option<usize>,
    pub milestone: Option<usize>,
    pub period: Option<usize>,
    pub zeta: Option<f64>,
    pub zeta_schedule: Option<Vec<f64>>,
    pub k_c: Option<usize>,
    pub k_o: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Transition matrix file: `rows = [[...], ...]`, row-stochastic.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionFile {
    pub rows: Vec<Vec<f64>>,
}

pub fn load_transition_file(path: &Path) -> Result<topofilter::TransitionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TransitionFile =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    topofilter::TransitionMatrix::from_rows(&file.rows)
}
