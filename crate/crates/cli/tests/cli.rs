use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn accelq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_accelq"))
        .args(args)
        .output()
        .expect("spawn accelq")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn bound_prints_report() {
    let v = stdout_json(&accelq(&[
        "bound", "--gamma", "0.5", "--m", "2", "--iters", "1000", "--n", "64", "--delta", "0.1",
    ]));
    assert_eq!(v["v_max"], 2.0);
    assert_eq!(v["d_max"], 8.0);
    assert!((v["bound"].as_f64().unwrap() - 3.846).abs() < 1e-3);
}

#[test]
fn tabular_run_writes_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, jobs) in [(&a, "1"), (&b, "2")] {
        let out = accelq(&[
            "tabular-run",
            "--seeds",
            "2",
            "--iters",
            "50",
            "--jobs",
            jobs,
            "--algos",
            "vanilla,aql",
            "--m-values",
            "2,3",
            "--out",
            path.to_str().unwrap(),
        ]);
        let summary = stdout_json(&out);
        assert_eq!(summary["cells"].as_array().unwrap().len(), 3);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let head = fs::read_to_string(&a).unwrap();
    assert!(head.starts_with("algo,m,seed,iteration,loss\n"));
    assert!(dir.path().join("a.summary.json").exists());

    let table = accelq(&["threshold-table", a.to_str().unwrap(), "--threshold", "0.5"]);
    assert!(table.status.success());
    let text = String::from_utf8(table.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("vanilla"));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "task": "lqr", "seeds": [3], "iterations": 20, "lqr": {"variants": ["hb"]}}"#,
    )
    .unwrap();
    let v = stdout_json(&accelq(&[
        "lqr-run",
        "--config",
        cfg.to_str().unwrap(),
        "--iters",
        "10",
    ]));
    assert_eq!(v["task"], "lqr");
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0]["m_or_variant"], "hb");
}

#[test]
fn mismatched_config_task_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"schema_version": 1, "task": "lqr"}"#).unwrap();
    let out = accelq(&["tabular-run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected 'tabular'"));
}

#[test]
fn solve_qstar_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.csv");
    let out = accelq(&["solve-qstar", "--map", "frozenlake4x4", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    // Header plus one row per state-action pair.
    assert_eq!(text.lines().count(), 1 + 16 * 4);
}

#[test]
fn lqr_system_reports_stable_gain() {
    let v = stdout_json(&accelq(&["lqr-system", "--masses", "2", "--actuators", "1"]));
    assert!(v["closed_loop_spectral_radius"].as_f64().unwrap() < 1.0);
    assert_eq!(v["k_star"].as_array().unwrap()[0].as_array().unwrap().len(), 4);
}

#[test]
fn bad_arguments_fail_cleanly() {
    assert!(!accelq(&["tabular-run", "--map", "missing.txt", "--iters", "1"])
        .status
        .success());
    assert!(!accelq(&["lqr-run", "--variants", "adam"]).status.success());
    assert!(!accelq(&["bound", "--gamma", "1.0"]).status.success());
}
