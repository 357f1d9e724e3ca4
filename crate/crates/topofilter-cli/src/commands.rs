use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::ValueEnum;
use serde::Serialize;
use topofilter::dataset::{load_dataset, load_labels, write_features_binary, write_labels_binary};
use topofilter::filter::FileSequenceProvider;
use topofilter::metrics::{empirical_purity, k_from_schedule};
use topofilter::sweep::write_sweep_csv;
use topofilter::synth::load_mixture_spec;
use topofilter::{
    inject_noise, iterate_selection, naive_select, run_sweep, run_theorem_suite, sample_mixture,
    topo_cc_select, topo_filter_select, Error, FilterParams, Result, SweepConfig,
    TheoremSuiteConfig, TransitionMatrix,
};

use crate::config::{
    self, FilterSection, GenSynthSection, IterateSection, NoiseInjectSection, SimulateSection,
    TheoremSection,
};
use crate::{
    FilterArgs, GenSynthArgs, IterateArgs, Method, NoiseInjectArgs, SimulateArgs, TheoremArgs,
};

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::Invalid(format!(
            "missing {flag}: give the flag or set it in the config file"
        ))
    })
}

fn resolve_transition(
    tau: Option<f64>,
    transition: Option<&Path>,
    num_classes: usize,
) -> Result<TransitionMatrix> {
    match (tau, transition) {
        (Some(_), Some(_)) => Err(Error::Invalid(
            "give either --tau or --transition, not both".into(),
        )),
        (Some(t), None) => TransitionMatrix::uniform(num_classes, t),
        (None, Some(path)) => {
            let matrix = config::load_transition_file(path)?;
            if matrix.num_classes() != num_classes {
                return Err(Error::Invalid(format!(
                    "transition matrix is {}x{0} but the data has {num_classes} classes",
                    matrix.num_classes()
                )));
            }
            Ok(matrix)
        }
        (None, None) => Err(Error::Invalid(
            "missing noise model: give --tau or --transition".into(),
        )),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

pub fn filter(args: FilterArgs, file: FilterSection) -> Result<ExitCode> {
    let features = require(args.features.or(file.features), "--features")?;
    let labels = require(args.labels.or(file.labels), "--labels")?;
    let true_labels = args.true_labels.or(file.true_labels);
    let method = match args.method {
        Some(m) => m,
        None => match file.method.as_deref() {
            None => Method::TopoFilter,
            Some(s) => Method::from_str(s, true)
                .map_err(|_| Error::Invalid(format!("unknown method {s:?} in config file")))?,
        },
    };
    let params = FilterParams {
        k_c: args.k_c.or(file.k_c).unwrap_or(4),
        k_o: args.k_o.or(file.k_o).unwrap_or(32),
        zeta: args.zeta.or(file.zeta).unwrap_or(0.5),
        milestone: 1,
        period: 1,
    };
    params.validate()?;
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("selection.json"));

    let ds = load_dataset(&features, &labels, true_labels.as_deref())?;
    let result = match method {
        Method::Naive => naive_select(&ds),
        Method::TopoCc => topo_cc_select(&ds, params.k_c)?,
        Method::TopoFilter => topo_filter_select(&ds, &params)?,
    };
    println!(
        "kept {} of {} ({:.1}%)",
        result.kept.len(),
        ds.n(),
        100.0 * result.kept.len() as f64 / ds.n() as f64
    );
    for (class, hist) in &result.component_size_histograms {
        println!("class {class}: component sizes {hist:?}");
    }
    println!("removed by vote: {}", result.outliers.len());
    if let Some(truth) = ds.true_labels() {
        if !result.kept.is_empty() {
            let p = empirical_purity(&result.kept, truth, ds.noisy_labels())?;
            println!("kept purity {p:.4}");
        }
    }
    result.save(&out)?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn simulate(args: SimulateArgs, file: SimulateSection) -> Result<ExitCode> {
    let spec_path = require(args.spec.or(file.spec), "--spec")?;
    let spec = load_mixture_spec(&spec_path)?;
    let transition = resolve_transition(
        args.tau.or(file.tau),
        args.transition.or(file.transition).as_deref(),
        spec.num_classes(),
    )?;
    let n = args.n.or(file.n).unwrap_or(2000);
    let config = SweepConfig {
        spec,
        transition,
        zetas: args
            .zetas
            .or(file.zetas)
            .unwrap_or_else(|| vec![0.25, 0.5, 0.75]),
        k_cs: args
            .k_cs
            .or(file.k_cs)
            .unwrap_or_else(|| vec![k_from_schedule(2.0, 1.5, n)]),
        k_os: args.k_os.or(file.k_os).unwrap_or_else(|| vec![32]),
        n,
        trials: args.trials.or(file.trials).unwrap_or(5),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let out_csv = args
        .out_csv
        .or(file.out_csv)
        .unwrap_or_else(|| PathBuf::from("sweep.csv"));
    let out_summary = args
        .out_summary
        .or(file.out_summary)
        .unwrap_or_else(|| PathBuf::from("sweep_summary.json"));

    let out = run_sweep(&config)?;
    write_sweep_csv(&out.rows, &out_csv)?;
    out.summary.save(&out_summary)?;
    for cell in &out.summary.cells {
        println!(
            "zeta={} k_c={} k_o={}: kept purity {} (naive {:.4}), kept {:.0}/{}",
            cell.zeta,
            cell.k_c,
            cell.k_o,
            fmt_opt(cell.mean_purity_kept),
            cell.mean_purity_naive,
            cell.mean_kept,
            config.n,
        );
    }
    if let Some(spread) = out.summary.purity_spread {
        println!("kept-purity spread across cells: {spread:.4}");
    }
    println!("wrote {} and {}", out_csv.display(), out_summary.display());
    Ok(ExitCode::SUCCESS)
}

pub fn theorem_check(args: TheoremArgs, file: TheoremSection) -> Result<ExitCode> {
    let spec_path = require(args.spec.or(file.spec), "--spec")?;
    let spec = load_mixture_spec(&spec_path)?;
    let transition = resolve_transition(
        args.tau.or(file.tau),
        args.transition.or(file.transition).as_deref(),
        spec.num_classes(),
    )?;
    let config = TheoremSuiteConfig {
        spec,
        transition,
        zeta: args.zeta.or(file.zeta).unwrap_or(0.75),
        k_o: args.k_o.or(file.k_o).unwrap_or(32),
        n: args.n.or(file.n).unwrap_or(10_000),
        trials: args.trials.or(file.trials).unwrap_or(20),
        seed: args.seed.or(file.seed).unwrap_or(0),
        schedule_c: args.schedule_c.or(file.schedule_c).unwrap_or(2.0),
        schedule_q: args.schedule_q.or(file.schedule_q).unwrap_or(1.5),
        mc_samples: args.mc_samples.or(file.mc_samples).unwrap_or(20_000),
        delta: args.delta.or(file.delta).unwrap_or(0.1),
    };
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("theorem_report.json"));

    let report = run_theorem_suite(&config)?;
    report.save(&out)?;
    println!(
        "rates: connectivity {:.2} isolation {:.2} filtering {:.2} abundancy {:.2} bayes {:.2}",
        report.connectivity_rate,
        report.isolation_rate,
        report.filtering_rate,
        report.abundancy_rate,
        report.bayes_consistency_rate,
    );
    println!(
        "kept purity {:.4} vs naive {:.4}; kept fraction {:.4} vs level-set mass {:.4}",
        report.mean_purity_kept,
        report.mean_purity_naive,
        report.mean_abundancy_ratio,
        report.mu_l_zeta.estimate,
    );
    if let Some(g1) = report.g1_bound {
        println!("closed-form minimum-purity bound: {g1:.4}");
    }
    println!("wrote {}", out.display());
    let failed = report.failed_assertions();
    if failed.is_empty() {
        println!("all assertions hold within delta = {}", config.delta);
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &failed {
            println!("FAIL {f}");
        }
        Ok(ExitCode::from(1))
    }
}

pub fn gen_synth(args: GenSynthArgs, file: GenSynthSection) -> Result<ExitCode> {
    let spec_path = require(args.spec.or(file.spec), "--spec")?;
    let spec = load_mixture_spec(&spec_path)?;
    let n = args.n.or(file.n).unwrap_or(1000);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let out_features = args
        .out_features
        .or(file.out_features)
        .unwrap_or_else(|| PathBuf::from("synth.topf"));
    let out_labels = args
        .out_labels
        .or(file.out_labels)
        .unwrap_or_else(|| PathBuf::from("synth.topl"));

    let ds = sample_mixture(&spec, n, seed)?;
    write_features_binary(&out_features, ds.features())?;
    write_labels_binary(&out_labels, ds.noisy_labels(), ds.num_classes())?;
    println!(
        "sampled {} points, dim {}, {} classes -> {} + {}",
        ds.n(),
        ds.dim(),
        ds.num_classes(),
        out_features.display(),
        out_labels.display(),
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct NoiseSidecar<'a> {
    rng_algorithm: &'a str,
    seed: u64,
    num_classes: usize,
    transition: Vec<Vec<f64>>,
    source: String,
    output: String,
    changed: usize,
    change_rate: f64,
}

pub fn noise_inject(args: NoiseInjectArgs, file: NoiseInjectSection) -> Result<ExitCode> {
    let labels_path = require(args.labels.or(file.labels), "--labels")?;
    let (labels, c_hint) = load_labels(&labels_path)?;
    let inferred = labels.iter().copied().max().map_or(1, |m| m as usize + 1);
    let num_classes = args
        .num_classes
        .or(file.num_classes)
        .or(c_hint)
        .unwrap_or(inferred);
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::Invalid(format!(
            "label {bad} outside the declared {num_classes} classes"
        )));
    }
    let transition = resolve_transition(
        args.tau.or(file.tau),
        args.transition.or(file.transition).as_deref(),
        num_classes,
    )?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("noisy.topl"));
    let sidecar_path = args
        .sidecar
        .or(file.sidecar)
        .unwrap_or_else(|| out.with_extension("json"));

    let noisy = inject_noise(&labels, &transition, seed)?;
    write_labels_binary(&out, &noisy, num_classes)?;
    let changed = labels.iter().zip(&noisy).filter(|(a, b)| a != b).count();
    let sidecar = NoiseSidecar {
        rng_algorithm: topofilter::rng::RNG_ALGORITHM,
        seed,
        num_classes,
        transition: transition.rows(),
        source: labels_path.display().to_string(),
        output: out.display().to_string(),
        changed,
        change_rate: changed as f64 / labels.len().max(1) as f64,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("cannot serialize sidecar: {e}")))?;
    std::fs::write(&sidecar_path, json + "\n").map_err(|e| Error::io(&sidecar_path, e))?;
    println!(
        "changed {changed} of {} labels ({:.2}%); wrote {} + {}",
        labels.len(),
        100.0 * sidecar.change_rate,
        out.display(),
        sidecar_path.display(),
    );
    Ok(ExitCode::SUCCESS)
}

pub fn iterate(args: IterateArgs, file: IterateSection) -> Result<ExitCode> {
    let features = require(args.features.or(file.features), "--features")?;
    if features.is_empty() {
        return Err(Error::Invalid("need at least one feature file".into()));
    }
    let labels_path = require(args.labels.or(file.labels), "--labels")?;
    let rounds = args.rounds.or(file.rounds).unwrap_or(features.len());
    let params = FilterParams {
        k_c: args.k_c.or(file.k_c).unwrap_or(4),
        k_o: args.k_o.or(file.k_o).unwrap_or(32),
        zeta: args.zeta.or(file.zeta).unwrap_or(0.5),
        milestone: args.milestone.or(file.milestone).unwrap_or(1),
        period: args.period.or(file.period).unwrap_or(1),
    };
    let schedule = args.zeta_schedule.or(file.zeta_schedule);
    let out_dir = args
        .out_dir
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("rounds"));

    let (noisy, _) = load_labels(&labels_path)?;
    let mut provider = FileSequenceProvider::new(features)?;
    let selections = iterate_selection(&mut provider, &noisy, &params, rounds, schedule.as_deref())?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    for r in &selections {
        let path = out_dir.join(format!("round_{:03}.json", r.round));
        r.result.save(&path)?;
        let stage = if r.ran_selection {
            "select"
        } else if r.round < params.milestone {
            "warmup"
        } else {
            "carry"
        };
        println!(
            "round {:>3} [{stage}] kept {}/{} zeta={}",
            r.round,
            r.result.kept.len(),
            noisy.len(),
            r.zeta,
        );
    }
    println!("wrote {} round files under {}", selections.len(), out_dir.display());
    Ok(ExitCode::SUCCESS)
}
