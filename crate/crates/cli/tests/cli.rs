//! End-to-end tests of the `sheetctl` binary: artifact layout, parameter
//! precedence, exit codes, and byte-level determinism of the reports.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sheetctl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Fresh per-test scratch directory under the system temp dir.
fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sheetctl-test-{tag}-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).expect("stale scratch removed");
    }
    fs::create_dir_all(&dir).expect("scratch created");
    dir
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn r0_writes_artifacts_and_passes() {
    let dir = scratch("r0");
    let out_dir = dir.join("run");
    let out = run(&["r0", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let params: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("params.json")).unwrap()).unwrap();
    assert_eq!(params["experiment"], "r0");
    assert_eq!(params["tol"], 1e-12);

    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("metric,value,std_error,target,tolerance,pass"));
    let row = lines.next().expect("one result row");
    assert!(row.starts_with("series root r0,"), "row: {row}");
    assert!(row.ends_with(",true"), "row: {row}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn rerun_is_byte_identical_whatever_the_worker_count() {
    let dir = scratch("determinism");
    let args = |out: &str| {
        vec![
            "sheet-check".to_string(),
            "--grid-nt".into(),
            "8".into(),
            "--grid-nx".into(),
            "8".into(),
            "--paths".into(),
            "500".into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            dir.join(out).to_str().unwrap().to_string(),
        ]
    };
    assert_eq!(code(&bin().args(args("a")).output().unwrap()), 0);
    assert_eq!(code(&bin().args(args("b")).output().unwrap()), 0);
    let single = bin().args(args("c")).env("RAYON_NUM_THREADS", "1").output().unwrap();
    assert_eq!(code(&single), 0);

    let read = |name: &str| fs::read(dir.join(name).join("results.csv")).unwrap();
    let (a, b, c) = (read("a"), read("b"), read("c"));
    assert_eq!(a, b, "rerun changed the report");
    assert_eq!(a, c, "worker count changed the report");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&run(&["r0", "--bogus"])), 2);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = scratch("badconfig");
    let cfg = dir.join("config.json");
    fs::write(&cfg, "{\"paths\": 100, \"path\": 100}").unwrap();
    let out = run(&["r0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(msg.contains("unknown field"), "stderr: {msg}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn off_root_horizon_fails_the_order_condition() {
    let dir = scratch("offroot");
    let out_dir = dir.join("run");
    let out = run(&[
        "lq",
        "--X",
        "0.6",
        "--grid-nt",
        "16",
        "--grid-nx",
        "16",
        "--paths",
        "200",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let row = csv
        .lines()
        .find(|l| l.starts_with("order-condition residual,"))
        .expect("condition row present");
    assert!(row.ends_with(",false"), "row: {row}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn flags_override_config_values() {
    let dir = scratch("precedence");
    let cfg = dir.join("config.json");
    fs::write(&cfg, "{\"seed\": 1, \"tol\": 1e-9}").unwrap();
    let out_dir = dir.join("run");
    let out = run(&[
        "r0",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let params: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("params.json")).unwrap()).unwrap();
    assert_eq!(params["seed"], 2, "flag wins over config");
    assert_eq!(params["tol"], 1e-9, "config wins over default");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn selftest_matches_shipped_expectations() {
    let dir = scratch("selftest");
    let out_dir = dir.join("run");
    let out = run(&["selftest", "--out", out_dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert_eq!(code(&out), 0, "stdout: {stdout}");
    assert!(stdout.contains("criterion  1: PASS"), "stdout: {stdout}");
    assert!(
        stdout.contains("criterion 11: FAIL [expected failure: recorded discrepancy]"),
        "stdout: {stdout}"
    );
    assert!(stdout.contains("criterion 12: PASS"), "stdout: {stdout}");

    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(!csv.contains("runtime"), "wall-clock rows leaked into the CSV");
    assert!(csv.lines().count() > 30, "selftest CSV carries every criterion's rows");
    fs::remove_dir_all(&dir).ok();
}
