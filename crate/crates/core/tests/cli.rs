use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hyperent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperent")).args(args).output().expect("binary runs")
}

fn short_config(dir: &Path) -> String {
    let out = hyperent(&["default-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap().replace("duration_s = 0.005", "duration_s = 0.001");
    let p = dir.join("short.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn efficiency_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = hyperent(&["efficiency", "--out", d, "--format", "csv"]);
    assert!(out.status.success());
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout["scenario"], "efficiency");
    let csv = fs::read_to_string(dir.path().join("efficiency.csv")).unwrap();
    assert!(csv.starts_with("quantity,value\n"));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report, stdout);
}

#[test]
fn json_format_skips_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperent(&["comb-spectrum", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(dir.path().join("report.json").exists());
    assert!(!dir.path().join("comb_spectrum.csv").exists());
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let o = dir.path().join(name);
        let out = hyperent(&["simulate", "--config", &cfg, "--seed", "9", "--out", o.to_str().unwrap(), "--format", "csv"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(["report.json", "timestamps.csv", "histogram.csv"].map(|f| fs::read(o.join(f)).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    let ts = String::from_utf8(runs[0][1].clone()).unwrap();
    assert!(ts.starts_with("detector_label,time_s\n"));
    assert!(ts.lines().count() > 100);
    let other = hyperent(&["simulate", "--config", &cfg, "--seed", "10"]);
    assert_ne!(other.stdout, fs::read(dir.path().join("a/report.json")).unwrap());
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[source]\nnot_a_key = 1\n").unwrap();
    let out = hyperent(&["chsh", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(out.stdout.is_empty());

    let missing = hyperent(&["efficiency", "--config", "/nonexistent/x.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn invalid_parameter_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperent(&["default-config"]);
    let text = String::from_utf8(out.stdout).unwrap().replace("visibility_tau = 0.92", "visibility_tau = 1.5");
    let p = dir.path().join("v.toml");
    fs::write(&p, text).unwrap();
    let out = hyperent(&["scan-phase", "--config", p.to_str().unwrap()]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("visibility"));
}
