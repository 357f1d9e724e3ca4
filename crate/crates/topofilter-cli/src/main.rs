mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Select clean training data by graph topology: per-class largest
/// connected components of a kNN graph, then a neighborhood label vote.
#[derive(Parser)]
#[command(name = "topofilter", version, about)]
struct Cli {
    /// TOML file supplying defaults for any flag; command-line values win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one selection pass over feature/label files.
    Filter(FilterArgs),
    /// Sweep (zeta, k_c, k_o) grids on synthetic data; write CSV + summary.
    Simulate(SimulateArgs),
    /// Run the seeded validation harness and check its assertions.
    TheoremCheck(TheoremArgs),
    /// Sample a mixture spec into feature and clean-label files.
    GenSynth(GenSynthArgs),
    /// Corrupt a label file through a transition matrix.
    NoiseInject(NoiseInjectArgs),
    /// Re-run selection across rounds of evolving representations.
    Iterate(IterateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Naive,
    TopoCc,
    TopoFilter,
}

#[derive(Args)]
struct FilterArgs {
    /// Feature file (.topf binary or .csv).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Noisy label file (.topl binary or .csv).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Optional ground-truth labels; enables purity reporting.
    #[arg(long)]
    true_labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Graph-stage neighbor count.
    #[arg(long)]
    k_c: Option<usize>,
    /// Vote-stage neighbor count.
    #[arg(long)]
    k_o: Option<usize>,
    /// Vote threshold in (0, 1].
    #[arg(long)]
    zeta: Option<f64>,
    /// Output path for the selection JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Mixture spec TOML.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Uniform off-diagonal noise rate (alternative to --transition).
    #[arg(long)]
    tau: Option<f64>,
    /// Transition matrix TOML (rows = [[...], ...]).
    #[arg(long)]
    transition: Option<PathBuf>,
    /// Comma-separated zeta grid.
    #[arg(long, value_delimiter = ',')]
    zetas: Option<Vec<f64>>,
    /// Comma-separated k_c grid.
    #[arg(long, value_delimiter = ',')]
    k_cs: Option<Vec<usize>>,
    /// Comma-separated k_o grid.
    #[arg(long, value_delimiter = ',')]
    k_os: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Args)]
struct TheoremArgs {
    /// Binary mixture spec TOML.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Uniform off-diagonal noise rate (alternative to --transition).
    #[arg(long)]
    tau: Option<f64>,
    /// Transition matrix TOML (rows = [[...], ...]).
    #[arg(long)]
    transition: Option<PathBuf>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    k_o: Option<usize>,
    /// Sample size per trial.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scale c of the neighbor schedule k = round(c * ln(n)^q).
    #[arg(long)]
    schedule_c: Option<f64>,
    /// Exponent q of the neighbor schedule.
    #[arg(long)]
    schedule_q: Option<f64>,
    /// Monte-Carlo sample count for the level-set measure.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Allowed failure fraction per assertion.
    #[arg(long)]
    delta: Option<f64>,
    /// Output path for the report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    /// Mixture spec TOML.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_features: Option<PathBuf>,
    #[arg(long)]
    out_labels: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseInjectArgs {
    /// Clean label file (.topl binary or .csv).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Uniform off-diagonal noise rate (alternative to --transition).
    #[arg(long)]
    tau: Option<f64>,
    /// Transition matrix TOML (rows = [[...], ...]).
    #[arg(long)]
    transition: Option<PathBuf>,
    /// Class count; inferred from the input when omitted.
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output label file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sidecar JSON path; defaults to the output with a .json extension.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct IterateArgs {
    /// Feature file per round; the last repeats for later rounds.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    features: Option<Vec<PathBuf>>,
    /// Noisy label file, fixed across rounds.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Total rounds; defaults to the number of feature files.
    #[arg(long)]
    rounds: Option<usize>,
    /// First round at which selection runs.
    #[arg(long)]
    milestone: Option<usize>,
    /// Rounds between selection re-runs after the milestone.
    #[arg(long)]
    period: Option<usize>,
    #[arg(long)]
    zeta: Option<f64>,
    /// Per-round zeta values overriding --zeta.
    #[arg(long, value_delimiter = ',')]
    zeta_schedule: Option<Vec<f64>>,
    #[arg(long)]
    k_c: Option<usize>,
    #[arg(long)]
    k_o: Option<usize>,
    /// Directory receiving one selection JSON per round.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(raw) = std::env::var("TOPOFILTER_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = topofilter::par::limit_threads(n) {
                    log::warn!("could not cap worker threads: {e}");
                }
            }
            _ => log::warn!("ignoring TOPOFILTER_THREADS={raw:?}: not a positive integer"),
        }
    }

    let cli = Cli::parse();
    let file = match config::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command {
        Command::Filter(args) => commands::filter(args, file.filter),
        Command::Simulate(args) => commands::simulate(args, file.simulate),
        Command::TheoremCheck(args) => commands::theorem_check(args, file.theorem_check),
        Command::GenSynth(args) => commands::gen_synth(args, file.gen_synth),
        Command::NoiseInject(args) => commands::noise_inject(args, file.noise_inject),
        Command::Iterate(args) => commands::iterate(args, file.iterate),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
