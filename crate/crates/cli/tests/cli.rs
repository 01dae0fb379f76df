use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bikebot(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bikebot"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("scenario.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

/// Header and rows of a CSV with `#` metadata lines.
/// The JSON error report is the last line on stderr.
fn error_report(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn steer_sweep_peaks_at_ninety_degrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = bikebot(&["steer-sweep"], None, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/steer_sweep.csv"));
    assert_eq!(header, ["phi0_deg", "radius_m", "s_tau_nm_per_deg"]);
    assert_eq!(rows.len(), 181);
    let peak = rows.iter().max_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
    assert_eq!(peak[0], 90.0);
    assert!((peak[2] - 0.87).abs() < 0.01);
    assert_eq!(rows[0][2], 0.0);
}

#[test]
fn balance_surface_is_odd() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "steer_sweep": {"delta_min_deg": -10, "delta_max_deg": 10, "delta_step_deg": 5,
        "roll_min_deg": -4, "roll_max_deg": 4, "roll_step_deg": 2}}"#;
    assert!(bikebot(&["steer-sweep"], Some(cfg), dir.path()).status.success());
    let (header, rows) = read_csv(&dir.path().join("out/balance_surface.csv"));
    assert_eq!(header, ["delta_deg", "phi_b_deg", "tau_b_nm"]);
    assert_eq!(rows.len(), 25);
    for r in &rows {
        let mirror = rows.iter().find(|m| m[0] == -r[0] && m[1] == -r[1]).unwrap();
        assert!((r[2] + mirror[2]).abs() < 1e-9 * (1.0 + r[2].abs()), "{r:?} vs {mirror:?}");
    }
}

#[test]
fn empty_range_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "steer_sweep": {"phi0_min_deg": 10, "phi0_max_deg": 5}}"#;
    let out = bikebot(&["steer-sweep"], Some(cfg), dir.path());
    assert!(out.status.success());
    let (header, rows) = read_csv(&dir.path().join("out/steer_sweep.csv"));
    assert_eq!(header.len(), 3);
    assert!(rows.is_empty());
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bikebot(&["plan"], Some(r#"{"version": 1, "plan": {"degre": 7}}"#), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = error_report(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("degre"));
    assert!(dir.path().join("out/error.json").exists());
}

#[test]
fn invalid_value_and_missing_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = bikebot(&["simulate"], Some(r#"{"version": 1, "simulate": {"trials": 0}}"#), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_bikebot"))
        .args(["capability", "--config", "/nonexistent/scenario.json", "--out"])
        .arg(dir.path().join("o2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_dp_grid_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "compare_dp": {"samples": [40], "max_cells": 1000}}"#;
    let out = bikebot(&["compare-dp"], Some(cfg), dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = error_report(&out);
    assert_eq!(err["error"], "solver");
}

#[test]
fn capability_orders_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let out = bikebot(&["capability"], None, dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/capability.json")).unwrap()).unwrap();
    let phi: Vec<f64> = v["estimates"].as_array().unwrap().iter().map(|e| e["phi_b_max_deg"].as_f64().unwrap()).collect();
    assert_eq!(phi.len(), 3);
    assert!(phi[0] < phi[1] && phi[1] < phi[2], "{phi:?}");
    assert_eq!(v["metadata"]["schema"], 1);
}

#[test]
fn compare_dp_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "compare_dp": {"samples": [20, 30]}}"#;
    let out = bikebot(&["compare-dp"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/compare_dp.csv"));
    assert_eq!(header[0], "n_s");
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r[3] >= 1.0 - 1e-9, "Bezier cannot beat the DP optimum by more than grid error: {r:?}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("N_s"));
}

const REGULATION: &str = r#"{"version": 1, "simulate": {"scenario": "regulation", "duration_s": 3, "noise_deg": 0.02}}"#;

#[test]
fn simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bikebot(&["simulate", "--seed", "7"], Some(REGULATION), dir.path()).status.success());
    let first = fs::read(dir.path().join("out/log.csv")).unwrap();
    assert!(bikebot(&["simulate", "--seed", "7"], Some(REGULATION), dir.path()).status.success());
    assert_eq!(first, fs::read(dir.path().join("out/log.csv")).unwrap());
    assert!(bikebot(&["simulate", "--seed", "8"], Some(REGULATION), dir.path()).status.success());
    assert_ne!(first, fs::read(dir.path().join("out/log.csv")).unwrap());

    let (header, rows) = read_csv_mixed(&dir.path().join("out/log.csv"));
    assert_eq!(header[0], "t_s");
    assert_eq!(rows.len(), 301);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metadata"]["seed"], 8);
    assert!(summary["balance_lost_at_s"].is_null());
}

fn read_csv_mixed(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn batch_writes_trials_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "simulate": {"scenario": "regulation", "duration_s": 2, "noise_deg": 0.02, "trials": 3}}"#;
    let out = bikebot(&["simulate", "--jobs", "2"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 1..=3 {
        assert!(dir.path().join(format!("out/trial_{i:03}/summary.json")).exists());
    }
    let agg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["trials"], 3);
}

#[test]
fn plan_writes_poses_and_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "plan": {"poses": [[-20.44, -19.50, 136.13, 175.04, -12.97, 127.28],
        [-10.47, -16.97, 137.01, 169.47, -22.58, 134.67]], "hold_s": 1}}"#;
    let out = bikebot(&["plan"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/plan.json")).unwrap()).unwrap();
    assert_eq!(plan["poses"].as_array().unwrap().len(), 2);
    assert_eq!(plan["segments"].as_array().unwrap().len(), 1);
    let (header, rows) = read_csv(&dir.path().join("out/constraints.csv"));
    let g = header.iter().position(|h| h == "g_b_nm").unwrap();
    let cap = header.iter().position(|h| h == "g_b_cap_nm").unwrap();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r[g].abs() <= r[cap]));
}
