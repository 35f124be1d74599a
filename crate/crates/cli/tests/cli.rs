use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lis0d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lis0d")).args(args).env_remove("LIS0D_OUT").output().expect("binary runs")
}

fn out_dir(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Reads one column of a CSV file with a header row.
fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let k = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|row| row.unwrap()[k].parse().unwrap()).collect()
}

fn summary_value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in:\n{text}"));
    line.split_whitespace().rev().nth(1).unwrap().parse().unwrap()
}

#[test]
fn version_flag() {
    let o = lis0d(&["--version"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("lis0d "));
}

#[test]
fn simulate_nominal_m3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "sim");
    let o = lis0d(&["simulate", "--model", "M3", "--c-rate", "0.3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let capacity = summary_value(&stdout(&o), "specific capacity:");
    assert!((capacity - 1675.0).abs() < 25.0, "{capacity}");

    let m = manifest(&out);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["model"], "M3");
    assert!(m["started"].is_string() && m["finished"].is_string());
    for file in ["trace.csv", "params.txt", "sim.txt"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let v = column(&out.join("trace.csv"), "V");
    assert!(v.len() > 100);
    assert!(*v.last().unwrap() <= 1.5 + 1e-9);
}

#[test]
fn written_inputs_reproduce_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = out_dir(&tmp, "a");
    let second = out_dir(&tmp, "b");
    let o = lis0d(&["simulate", "--model", "M1", "--c-rate", "0.2", "--out", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = lis0d(&[
        "simulate",
        "--model",
        "M1",
        "--params",
        first.join("params.txt").to_str().unwrap(),
        "--config",
        first.join("sim.txt").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(first.join("trace.csv")).unwrap(), fs::read(second.join("trace.csv")).unwrap());
}

#[test]
fn lower_rate_gives_less_polarisation() {
    let tmp = tempfile::tempdir().unwrap();
    let mean_voltage = |rate: &str| {
        let out = out_dir(&tmp, rate);
        let o = lis0d(&["simulate", "--model", "M3", "--c-rate", rate, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v = column(&out.join("trace.csv"), "V");
        let cap = column(&out.join("trace.csv"), "capacity_mAh_per_g");
        // voltage averaged over the first half of the delivered capacity
        let half = cap.last().unwrap() / 2.0;
        let early: Vec<f64> = v.iter().zip(&cap).filter(|(_, &c)| c <= half).map(|(&v, _)| v).collect();
        early.iter().sum::<f64>() / early.len() as f64
    };
    assert!(mean_voltage("0.125") > mean_voltage("0.3"));
}

#[test]
fn zero_current_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lis0d(&["simulate", "--model", "M3", "--current", "0", "--out", out_dir(&tmp, "x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("current"), "{}", stderr(&o));
}

#[test]
fn bad_parameter_file_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let params = tmp.path().join("p.txt");
    fs::write(&params, "model = M2\ngamma = 1.0\nE0[9] = 2.0\n").unwrap();
    let o = lis0d(&[
        "simulate",
        "--model",
        "M2",
        "--params",
        params.to_str().unwrap(),
        "--out",
        out_dir(&tmp, "x").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn missing_data_file_is_an_ingestion_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let o = lis0d(&[
        "fit",
        "--model",
        "M3",
        "--data",
        missing.to_str().unwrap(),
        "--mu",
        "3.33e4",
        "--out",
        out_dir(&tmp, "fit").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("nope.csv"), "{}", stderr(&o));
}

#[test]
fn malformed_data_is_an_ingestion_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    let mut text = String::from("t_s,V,I_A\n");
    for k in 0..20 {
        text.push_str(&format!("{},{},1e-3\n", k * 10, if k == 7 { "high" } else { "2.2" }));
    }
    fs::write(&bad, text).unwrap();
    let o = lis0d(&[
        "fit",
        "--model",
        "M1",
        "--data",
        bad.to_str().unwrap(),
        "--mu",
        "1",
        "--out",
        out_dir(&tmp, "fit").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("line 9"), "{}", stderr(&o));
}

#[test]
fn fit_recovers_synthetic_m3_discharge() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "fit");
    let o = lis0d(&[
        "fit",
        "--model",
        "M3",
        "--data",
        &data("m3_synthetic.csv"),
        "--mu",
        "3.33e4",
        "--bounds",
        &data("m3_bounds.txt"),
        "--seed",
        "42",
        "--swarm-size",
        "20",
        "--max-iters",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rmse_mv = summary_value(&text, "RMSE =");
    assert!(rmse_mv <= 5.0, "{text}");

    let m = manifest(&out);
    assert_eq!(m["command"], "fit");
    assert_eq!(m["seed"], 42);
    let current = m["config"]["model_current_A"].as_f64().unwrap();
    assert!((current - 0.999).abs() < 1e-9, "{current}");
    for file in ["theta.csv", "summary.txt", "history.csv", "trace.csv"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let best = column(&out.join("history.csv"), "best_J");
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn scale_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let proto = out_dir(&tmp, "proto");
    let model = out_dir(&tmp, "model");
    let o = lis0d(&["scale", "--model", "M4", "--mu", "250", "--direction", "to-proto", "--out", proto.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scaled = fs::read_to_string(proto.join("scaled_params.txt")).unwrap();
    assert!(scaled.contains("m0[S8] = 0.0112"), "{scaled}");
    let o = lis0d(&[
        "scale",
        "--model",
        "M4",
        "--params",
        proto.join("scaled_params.txt").to_str().unwrap(),
        "--mu",
        "250",
        "--direction",
        "to-model",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let back = fs::read_to_string(model.join("scaled_params.txt")).unwrap();
    assert!(back.contains("m0[S8] = 2.8  #"), "{back}");
    assert!(back.contains("omega = 0.1  #"), "{back}");
}

#[test]
fn non_positive_mu_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lis0d(&["scale", "--model", "M1", "--mu", "-3", "--out", out_dir(&tmp, "x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_trace_per_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "runs");
    let o = lis0d(&[
        "sweep",
        "--model",
        "M2",
        "--param",
        "E0[1]",
        "--offsets=abs-0.05,abs+0.05",
        "--name",
        "e0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = out.join("e0").join("E0[1]");
    for file in ["nominal.csv", "abs-0.05.csv", "abs+0.05.csv", "summary.csv"] {
        assert!(dir.join(file).exists(), "{file}");
    }
    let high = column(&dir.join("summary.csv"), "high_plateau_V");
    assert_eq!(high.len(), 3);
    assert!(high[1] < high[0] && high[0] < high[2], "{high:?}");
    assert_eq!(manifest(&out.join("e0"))["command"], "sweep");
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lis0d(&["sweep", "--model", "M1", "--param", "E0[4]", "--out", out_dir(&tmp, "x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rank_puts_potentials_first() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "rank");
    let o = lis0d(&["rank", "--model", "M4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("ranking.csv")).unwrap();
    let first = text.lines().nth(1).unwrap();
    assert!(first.starts_with("1,E0["), "{text}");
    // header, E0 and i0 of the five reactions, five lumped parameters
    assert_eq!(text.lines().count(), 1 + 5 + 5 + 5);
}
