use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use topofilter::dataset::{read_features_binary, read_labels_binary, write_labels_binary};
use topofilter::filter::load_selection;
use topofilter::metrics::TheoremReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topofilter"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_spec(dir: &Path, name: &str, m: f64) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        r#"
[[components]]
class = 0
weight = 0.5
mean = [{neg}, 0.0]
cov = [[1.0, 0.0], [0.0, 1.0]]

[[components]]
class = 1
weight = 0.5
mean = [{m}, 0.0]
cov = [[1.0, 0.0], [0.0, 1.0]]
"#,
        neg = -m,
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn gen_synth_then_filter_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.toml", 4.0);
    let feat = dir.path().join("f.topf");
    let lab = dir.path().join("l.topl");
    let out = run(&[
        "gen-synth",
        "--spec", spec.to_str().unwrap(),
        "--n", "400",
        "--seed", "1",
        "--out-features", feat.to_str().unwrap(),
        "--out-labels", lab.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (_, n, d) = read_features_binary(&feat).unwrap();
    assert_eq!((n, d), (400, 2));
    let (labels, c) = read_labels_binary(&lab).unwrap();
    assert_eq!((labels.len(), c), (400, 2));

    let sel = dir.path().join("sel.json");
    let out = run(&[
        "filter",
        "--features", feat.to_str().unwrap(),
        "--labels", lab.to_str().unwrap(),
        "--true-labels", lab.to_str().unwrap(),
        "--k-c", "8",
        "--k-o", "8",
        "--zeta", "0.5",
        "--out", sel.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("kept"), "{text}");
    assert!(text.contains("kept purity 1.0000"), "{text}");
    let result = load_selection(&sel).unwrap();
    assert!(!result.kept.is_empty());
    result.check_invariants().unwrap();
}

#[test]
fn filter_missing_labels_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.toml", 4.0);
    let feat = dir.path().join("f.topf");
    let lab = dir.path().join("l.topl");
    run(&[
        "gen-synth",
        "--spec", spec.to_str().unwrap(),
        "--n", "50",
        "--out-features", feat.to_str().unwrap(),
        "--out-labels", lab.to_str().unwrap(),
    ]);
    let out = run(&[
        "filter",
        "--features", feat.to_str().unwrap(),
        "--labels", "/no/such/labels.topl",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/no/such/labels.topl"), "{}", stderr(&out));
}

#[test]
fn filter_rejects_zeta_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.toml", 4.0);
    let feat = dir.path().join("f.topf");
    let lab = dir.path().join("l.topl");
    run(&[
        "gen-synth",
        "--spec", spec.to_str().unwrap(),
        "--n", "50",
        "--out-features", feat.to_str().unwrap(),
        "--out-labels", lab.to_str().unwrap(),
    ]);
    let out = run(&[
        "filter",
        "--features", feat.to_str().unwrap(),
        "--labels", lab.to_str().unwrap(),
        "--zeta", "1.5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("zeta"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["filter", "--bogus"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn noise_inject_matches_requested_rate() {
    let dir = tempfile::tempdir().unwrap();
    let clean: Vec<u32> = (0..5000).map(|i| (i % 10) as u32).collect();
    let input = dir.path().join("clean.topl");
    write_labels_binary(&input, &clean, 10).unwrap();
    let output = dir.path().join("noisy.topl");
    let out = run(&[
        "noise-inject",
        "--labels", input.to_str().unwrap(),
        "--tau", "0.4",
        "--seed", "7",
        "--out", output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (noisy, c) = read_labels_binary(&output).unwrap();
    assert_eq!(c, 10);
    let diff = clean.iter().zip(&noisy).filter(|(a, b)| a != b).count();
    let rate = diff as f64 / clean.len() as f64;
    assert!((rate - 0.4).abs() < 0.03, "rate {rate}");

    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("noisy.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["seed"], 7);
    assert_eq!(sidecar["num_classes"], 10);
    assert_eq!(sidecar["transition"][0][0], 0.6);
    assert_eq!(sidecar["changed"], diff);
}

#[test]
fn noise_inject_zero_rate_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let clean: Vec<u32> = (0..200).map(|i| (i % 4) as u32).collect();
    let input = dir.path().join("clean.topl");
    write_labels_binary(&input, &clean, 4).unwrap();
    let output = dir.path().join("copy.topl");
    let out = run(&[
        "noise-inject",
        "--labels", input.to_str().unwrap(),
        "--tau", "0",
        "--out", output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read(&input).unwrap(),
        std::fs::read(&output).unwrap(),
        "zero noise leaves the file byte-identical"
    );
}

#[test]
fn simulate_is_deterministic_and_validates_grids() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.toml", 4.0);
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    let base = [
        "simulate",
        "--spec", spec.to_str().unwrap(),
        "--tau", "0.2",
        "--zetas", "0.4,0.6",
        "--k-cs", "6",
        "--k-os", "4",
        "--n", "160",
        "--trials", "2",
        "--seed", "3",
    ];
    let mut args_a: Vec<&str> = base.to_vec();
    let summary_a = dir.path().join("a.json");
    args_a.extend(["--out-csv", csv_a.to_str().unwrap(), "--out-summary", summary_a.to_str().unwrap()]);
    let out = run(&args_a);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut args_b: Vec<&str> = base.to_vec();
    let summary_b = dir.path().join("b.json");
    args_b.extend(["--out-csv", csv_b.to_str().unwrap(), "--out-summary", summary_b.to_str().unwrap()]);
    run(&args_b);
    assert_eq!(
        std::fs::read(&csv_a).unwrap(),
        std::fs::read(&csv_b).unwrap(),
        "equal seeds give byte-identical CSVs"
    );
    assert_eq!(std::fs::read(&summary_a).unwrap(), std::fs::read(&summary_b).unwrap());
    let header = std::fs::read_to_string(&csv_a).unwrap();
    assert!(header.starts_with("zeta,k_c,k_o,trial,"), "{header}");
    assert_eq!(header.lines().count(), 1 + 2 * 2, "header plus cells x trials");

    // An empty grid from the config file (and no flag to override it) is a
    // validation error.
    let config = dir.path().join("empty.toml");
    std::fs::write(&config, "[simulate]\nzetas = []\n").unwrap();
    let out = run(&[
        "simulate",
        "--config", config.to_str().unwrap(),
        "--spec", spec.to_str().unwrap(),
        "--tau", "0.2",
        "--n", "160",
        "--trials", "1",
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("zeta"), "names the empty grid: {}", stderr(&out));
}

#[test]
fn theorem_check_clean_limit_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.toml", 6.0);
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "theorem-check",
        "--spec", spec.to_str().unwrap(),
        "--tau", "0",
        "--zeta", "0.75",
        "--k-o", "16",
        "--n", "400",
        "--trials", "10",
        "--mc-samples", "2000",
        "--seed", "11",
        "--out", report_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}\n{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("all assertions hold"), "{}", stdout(&out));
    let report = TheoremReport::load(&report_path).unwrap();
    assert_eq!(report.connectivity_rate, 1.0);
    assert_eq!(report.filtering_rate, 1.0);
    assert_eq!(report.mean_purity_kept, 1.0);
}

#[test]
fn theorem_check_under_noise_reports_the_failing_predicate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.toml", 4.0);
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "theorem-check",
        "--spec", spec.to_str().unwrap(),
        "--tau", "0.2",
        "--n", "400",
        "--trials", "10",
        "--mc-samples", "2000",
        "--seed", "5",
        "--out", report_path.to_str().unwrap(),
    ]);
    // The vote filter drops roughly the noise-rate fraction of points, so the
    // kept fraction sits well under the level-set mass and the abundancy
    // assertion fails by construction at this noise level.
    assert_eq!(code(&out), 1, "{}\n{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("FAIL abundancy"), "{}", stdout(&out));
    let report = TheoremReport::load(&report_path).unwrap();
    assert!(report.mean_abundancy_ratio < report.mu_l_zeta.estimate);
    assert_eq!(report.purity_improvement_rate, 1.0);
}

#[test]
fn theorem_check_excludes_connectivity_for_split_classes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.toml");
    std::fs::write(
        &path,
        r#"
[[components]]
class = 0
weight = 0.25
mean = [-8.0, 0.0]
cov = [[1.0, 0.0], [0.0, 1.0]]

[[components]]
class = 0
weight = 0.25
mean = [0.0, 8.0]
cov = [[1.0, 0.0], [0.0, 1.0]]

[[components]]
class = 1
weight = 0.5
mean = [8.0, 0.0]
cov = [[1.0, 0.0], [0.0, 1.0]]
"#,
    )
    .unwrap();
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "theorem-check",
        "--spec", path.to_str().unwrap(),
        "--tau", "0.1",
        "--n", "300",
        "--trials", "10",
        "--mc-samples", "1000",
        "--out", report_path.to_str().unwrap(),
    ]);
    assert!(stderr(&out).contains("disconnected"), "{}", stderr(&out));
    let report = TheoremReport::load(&report_path).unwrap();
    assert_eq!(report.multi_component_classes, vec![0]);
    assert!(report.connectivity_rate < 1.0, "the split class does disconnect");
    for line in stdout(&out).lines() {
        assert!(
            !(line.starts_with("FAIL") && line.contains("connectivity")),
            "connectivity must be excluded: {line}"
        );
    }
}

#[test]
fn config_file_supplies_defaults_and_cli_wins() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.toml", 4.0);
    let feat = dir.path().join("f.topf");
    let lab = dir.path().join("l.topl");
    run(&[
        "gen-synth",
        "--spec", spec.to_str().unwrap(),
        "--n", "200",
        "--out-features", feat.to_str().unwrap(),
        "--out-labels", lab.to_str().unwrap(),
    ]);
    let sel = dir.path().join("sel.json");
    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        format!(
            "[filter]\nfeatures = {:?}\nlabels = {:?}\nzeta = 0.25\nk_c = 6\nk_o = 6\nout = {:?}\n",
            feat.to_str().unwrap(),
            lab.to_str().unwrap(),
            sel.to_str().unwrap(),
        ),
    )
    .unwrap();

    let out = run(&["filter", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let result = load_selection(&sel).unwrap();
    assert_eq!(result.zeta, Some(0.25));
    assert_eq!(result.k_c, Some(6));

    let out = run(&["filter", "--config", config.to_str().unwrap(), "--zeta", "0.75"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(load_selection(&sel).unwrap().zeta, Some(0.75), "flag beats file");

    std::fs::write(&config, "[filter]\nbanana = 1\n").unwrap();
    let out = run(&["filter", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "unknown config keys are rejected");
}

#[test]
fn iterate_runs_on_schedule_and_carries_between() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.toml", 4.0);
    let f1 = dir.path().join("r1.topf");
    let f2 = dir.path().join("r2.topf");
    let lab = dir.path().join("l.topl");
    run(&[
        "gen-synth",
        "--spec", spec.to_str().unwrap(),
        "--n", "200",
        "--seed", "1",
        "--out-features", f1.to_str().unwrap(),
        "--out-labels", lab.to_str().unwrap(),
    ]);
    run(&[
        "gen-synth",
        "--spec", spec.to_str().unwrap(),
        "--n", "200",
        "--seed", "2",
        "--out-features", f2.to_str().unwrap(),
        "--out-labels", dir.path().join("ignored.topl").to_str().unwrap(),
    ]);
    let out_dir = dir.path().join("rounds");
    let features = format!("{},{}", f1.to_str().unwrap(), f2.to_str().unwrap());
    let out = run(&[
        "iterate",
        "--features", &features,
        "--labels", lab.to_str().unwrap(),
        "--rounds", "4",
        "--milestone", "2",
        "--period", "2",
        "--k-c", "6",
        "--k-o", "6",
        "--zeta", "0.5",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for i in 1..=4 {
        assert!(out_dir.join(format!("round_{i:03}.json")).exists());
    }
    let text = stdout(&out);
    assert!(text.contains("round   1 [warmup]"), "{text}");
    assert!(text.contains("round   2 [select]"), "{text}");
    assert!(text.contains("round   3 [carry]"), "{text}");
    assert!(text.contains("round   4 [select]"), "{text}");
    assert_eq!(
        std::fs::read(out_dir.join("round_002.json")).unwrap(),
        std::fs::read(out_dir.join("round_003.json")).unwrap(),
        "carried rounds persist the same selection"
    );
    let warmup = load_selection(out_dir.join("round_001.json")).unwrap();
    assert_eq!(warmup.kept.len(), 200, "before the milestone everything is kept");
}
