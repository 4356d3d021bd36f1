use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: [&str; 4] = ["--adam-epochs", "6", "--lbfgs-steps", "2"];

fn gcpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcpinn")).args(args).output().unwrap()
}

fn run_in(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", out.to_str().unwrap()];
    args.extend_from_slice(&TINY);
    args.extend_from_slice(extra);
    gcpinn(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn metrics(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

/// Data rows of a CSV written with the `#` provenance header.
fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map(Result::unwrap).collect()
}

#[test]
fn run_writes_artifacts_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--benchmark", "helmholtz1d", "--method", "gc-torus"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let conv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let mut lines = conv.lines();
    let config: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# config: ").unwrap()).unwrap();
    assert_eq!(config["benchmark"], "helmholtz1d");
    assert_eq!(config["parameter_count"], 19_841);
    assert_eq!(lines.next().unwrap(), "# seed: 3407");
    assert_eq!(lines.next().unwrap(), "seed,iteration,stage,total,residual,bc,reg,strategy,test_rel_l2");
    let data = rows(&dir.path().join("convergence.csv"));
    assert!(data.len() >= 6);
    assert!(data.iter().all(|r| r[0] == *"3407"));

    let m = metrics(dir.path());
    assert_eq!(m["seeds"], serde_json::json!([3407]));
    assert_eq!(m["config"]["method"], "gc-torus");
    assert!(m["summary"]["mean"]["rel_l2"].as_f64().unwrap().is_finite());
    assert!(dir.path().join("checkpoint_seed3407.json").exists());
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"benchmark":"burgers1d","method":"gc-local","mapping":{"beta":7.0},"seeds":[11,12]}"#).unwrap();
    let out = dir.path().join("o");
    let o = run_in(&out, &["--config", cfg.to_str().unwrap(), "--beta", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&out);
    assert_eq!(m["config"]["mapping"]["beta"], 9.0);
    assert_eq!(m["seeds"], serde_json::json!([11, 12]));
    let seeds: Vec<String> = rows(&out.join("convergence.csv")).iter().map(|r| r[0].to_string()).collect();
    assert!(seeds.contains(&"11".into()) && seeds.contains(&"12".into()));
}

#[test]
fn invalid_configuration_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"benchmark":"burgers1d","method":"pinn","epochs":5}"#).unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&run_in(&out, &["--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&run_in(&out, &["--benchmark", "heat1d", "--method", "pinn"])), 2);
    assert_eq!(code(&run_in(&out, &["--benchmark", "burgers1d"])), 2);
    assert_eq!(code(&run_in(&out, &["--benchmark", "burgers1d", "--method", "gc-radial", "--alpha", "-1"])), 2);
    assert!(!out.join("convergence.csv").exists());
}

#[test]
fn identical_invocations_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--benchmark", "convdiff1d", "--method", "sa"];
    assert_eq!(code(&run_in(dir.path(), &args)), 0);
    let first = fs::read(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(code(&run_in(dir.path(), &args)), 0);
    assert_eq!(first, fs::read(dir.path().join("convergence.csv")).unwrap());
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = |w: &'static str| -> Vec<&str> {
        let mut a = vec!["--workers", w, "run", "--out", out, "--benchmark", "convdiff2d", "--method", "gc-radial"];
        a.extend_from_slice(&TINY);
        a
    };
    assert_eq!(code(&gcpinn(&args("1"))), 0);
    let one = fs::read(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(code(&gcpinn(&args("4"))), 0);
    assert_eq!(one, fs::read(dir.path().join("convergence.csv")).unwrap());
}

#[test]
fn single_value_sweep_matches_a_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let o = run_in(&run_dir, &["--benchmark", "burgers1d", "--method", "gc-local", "--beta", "15"]);
    assert_eq!(code(&o), 0);
    let want = metrics(&run_dir)["summary"]["mean"]["rel_l2"].as_f64().unwrap();

    let sweep_dir = dir.path().join("sweep");
    let mut args = vec!["sweep", "--out", sweep_dir.to_str().unwrap(), "--benchmark", "burgers1d", "--method", "gc-local"];
    args.extend_from_slice(&TINY);
    args.extend_from_slice(&["--parameter", "beta", "--values", "15"]);
    let o = gcpinn(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&sweep_dir.join("sweep.csv"));
    assert_eq!(table.len(), 1);
    assert_eq!(&table[0][0], "beta");
    assert_eq!(table[0][4].parse::<f64>().unwrap(), want);
    assert!(sweep_dir.join("beta_15").join("convergence.csv").exists());
}

#[test]
fn sweep_parameter_must_match_the_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--out", dir.path().to_str().unwrap(), "--benchmark", "burgers1d", "--method", "gc-local"];
    args.extend_from_slice(&["--parameter", "alpha", "--values", "5,10"]);
    assert_eq!(code(&gcpinn(&args)), 2);
}

#[test]
fn ntk_without_training_records_one_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gcpinn(&[
        "ntk", "--out", out, "--benchmark", "convdiff1d", "--method", "gc-local", "--adam-epochs", "0", "--lbfgs-steps", "0",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut spectra: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("ntk_spectrum_"))
        .collect();
    spectra.sort();
    assert_eq!(spectra, vec!["ntk_spectrum_0.csv"]);
    let ranks = rows(&dir.path().join("ntk_effective_rank.csv"));
    assert_eq!(ranks.len(), 1);
    assert_eq!(&ranks[0][0], "0");
    let eig = rows(&dir.path().join("ntk_spectrum_0.csv"));
    assert_eq!(eig.len(), 128);
    let kernel = rows(&dir.path().join("ntk_kernel_0.csv"));
    assert_eq!(kernel.len(), 128);
}

#[test]
fn check_exit_codes() {
    let o = gcpinn(&["check", "--suite", "mms"]);
    assert_eq!(code(&o), 0);
    let lines: Vec<Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|l| l["suite"] == "mms" && l["passed"] == true));
    assert_eq!(code(&gcpinn(&["check", "--suite", "nonsense"])), 2);
    // the local-stretch identity limit is not met by the gated map
    assert_eq!(code(&gcpinn(&["check", "--suite", "mappings"])), 1);
}

#[test]
fn tuned_mapping_defaults_yield_to_explicit_values() {
    let dir = tempfile::tempdir().unwrap();
    let tuned = dir.path().join("tuned");
    let o = run_in(&tuned, &["--benchmark", "convdiff1d", "--method", "gc-local", "--mapping-defaults", "tuned"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(metrics(&tuned)["config"]["mapping"]["beta"], 50.0);
    let explicit = dir.path().join("explicit");
    let o = run_in(&explicit, &["--benchmark", "convdiff1d", "--method", "gc-local", "--mapping-defaults", "tuned", "--beta", "12"]);
    assert_eq!(code(&o), 0);
    assert_eq!(metrics(&explicit)["config"]["mapping"]["beta"], 12.0);
}
