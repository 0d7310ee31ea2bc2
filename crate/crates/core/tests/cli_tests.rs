mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_delay-consensus");

fn run_in(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("DELAY_CONSENSUS_OUT", out).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn shipped_json(name: &str) -> Value {
    read_json(&scenario_path(name))
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let p = dir.join(format!("{name}.json"));
    std::fs::write(&p, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    p
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn help_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let help = run_in(dir.path(), &["--help"]);
    assert!(help.status.success());
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in ["analyze", "simulate", "plot"] {
        assert!(text.contains(cmd), "{text}");
    }
    let version = run_in(dir.path(), &["--version"]);
    assert!(String::from_utf8_lossy(&version.stdout).contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(run_in(dir.path(), &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn analyze_shipped_leaderless() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["analyze", scenario_path("leaderless6").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("leaderless6.analysis.json"));
    assert!((report["gamma_sum"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(close(&floats(&report["gamma"]), &[0.4, 0.2, 0.1, 0.1, 0.1, 0.1], 1e-12));
    // Σγ q̇(0) = [0.12, -0.08], denominator 1 + 1.5·0.5·1.5
    assert!(close(&floats(&report["predicted_velocity"]), &[0.12 / 2.125, -0.08 / 2.125], 1e-12));
    assert!((report["sigma_s"].as_f64().unwrap() - 1.0 / 1.75).abs() < 1e-12);
    assert_eq!(report["spanning_tree"], json!(true));
}

#[test]
fn analyze_zero_delay_variant() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = shipped_json("leaderless6");
    for e in cfg["graph"]["edges"].as_array_mut().unwrap() {
        e["T"] = json!(0.0);
    }
    let p = write_config(dir.path(), "nodelay", &cfg);
    assert!(run_in(dir.path(), &["analyze", p.to_str().unwrap()]).status.success());
    let report = read_json(&dir.path().join("nodelay.analysis.json"));
    assert_eq!(report["sigma_s"].as_f64().unwrap(), 1.0);
    assert!(close(&floats(&report["predicted_velocity"]), &[0.12, -0.08], 1e-12));
}

#[test]
fn analyze_leader_reports_leader_velocity() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["analyze", scenario_path("leader6").to_str().unwrap()]).status.success());
    let report = read_json(&dir.path().join("leader6.analysis.json"));
    assert_eq!(floats(&report["predicted_velocity"]), vec![1.5, 2.0]);
    assert_eq!(report["leader_mode"], json!(true));
}

#[test]
fn invalid_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let leaderless = scenario_path("leaderless6");
    assert_eq!(run_in(dir.path(), &["simulate", leaderless.to_str().unwrap(), "--duration", "0"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["simulate", leaderless.to_str().unwrap(), "--dt", "-1"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["analyze", "/nonexistent/x.json"]).status.code(), Some(1));

    let mut cfg = shipped_json("leaderless6");
    cfg["graph"]["colour"] = json!("blue");
    let p = write_config(dir.path(), "unknown", &cfg);
    let out = run_in(dir.path(), &["analyze", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    // delay not a multiple of dt
    let mut cfg = shipped_json("leaderless6");
    cfg["graph"]["edges"][0]["T"] = json!(0.5025);
    let p = write_config(dir.path(), "offgrid", &cfg);
    assert_eq!(run_in(dir.path(), &["simulate", p.to_str().unwrap()]).status.code(), Some(1));
    assert!(!dir.path().join("offgrid.trace.csv").exists());
}

#[test]
fn divergence_exits_two_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let arm = |qd: f64| json!({"model": "two_link_manipulator", "a_true": [1.667, 0.5, 0.333], "q0": [0.0, 0.0], "qdot0": [qd, 0.0], "K_diag": [400.0, 400.0], "Gamma_diag": [2.0, 2.0, 2.0]});
    let cfg = json!({
        "graph": {"edges": [{"from": 1, "to": 2, "w": 1.0, "b": 1.0, "T": 0.5}, {"from": 2, "to": 1, "w": 1.0, "b": 1.0, "T": 0.5}]},
        "agents": [arm(1.0), arm(1.0)],
        "sim": {"dt": 0.005, "duration": 5.0, "integrator": "euler"}
    });
    let p = write_config(dir.path(), "unstable", &cfg);
    let out = run_in(dir.path(), &["simulate", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let table = delay_consensus::export::read_trace(&dir.path().join("unstable.trace.csv")).unwrap();
    assert!(table.times().last().unwrap() < 5.0);
    assert!(dir.path().join("unstable.metrics.json").exists());
}

#[test]
fn plot_rejects_bad_traces() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.trace.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(run_in(dir.path(), &["plot", empty.to_str().unwrap()]).status.code(), Some(1));
    let header_only = dir.path().join("header.trace.csv");
    std::fs::write(&header_only, delay_consensus::export::trace_header(2, 2).join(",") + "\n").unwrap();
    assert_eq!(run_in(dir.path(), &["plot", header_only.to_str().unwrap()]).status.code(), Some(1));
    let garbage = dir.path().join("garbage.trace.csv");
    std::fs::write(&garbage, "a,b,c\n1,2,3\n").unwrap();
    let out = run_in(dir.path(), &["plot", garbage.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("garbage.plot.py").exists());
}

#[test]
fn simulate_then_plot_leader_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["simulate", scenario_path("leader6").to_str().unwrap(), "--duration", "2", "--stride", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = dir.path().join("leader6.trace.csv");
    let table = delay_consensus::export::read_trace(&trace).unwrap();
    assert_eq!(table.header.len(), 1 + 6 * (4 * 2 + 2));
    assert_eq!(table.rows.len(), 41);
    assert_eq!(table.times().last(), Some(2.0));

    let out = run_in(dir.path(), &["plot", trace.to_str().unwrap(), "--coords", "1,2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(&dir.path().join("leader6.plot.json"));
    assert_eq!(floats(&manifest["leader_qdot"]), vec![1.5, 2.0]);
    assert_eq!(floats(&manifest["leader_q0"]), vec![0.5, 0.5]);
    assert!(dir.path().join("leader6.plot.py").exists());
    assert_eq!(run_in(dir.path(), &["plot", trace.to_str().unwrap(), "--coords", "3"]).status.code(), Some(1));
}

#[test]
fn traces_are_byte_identical_and_round_trip() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let path = scenario_path("di6");
    for dir in [&a, &b] {
        assert!(run_in(dir.path(), &["simulate", path.to_str().unwrap(), "--duration", "3", "--seedless"]).status.success());
    }
    let bytes = std::fs::read(a.path().join("di6.trace.csv")).unwrap();
    assert_eq!(bytes, std::fs::read(b.path().join("di6.trace.csv")).unwrap());

    // every number parses back to the value the simulator produced
    let mut cfg = shipped("di6");
    cfg.duration = 3.0;
    let trace = delay_consensus::sim::run(&cfg).unwrap();
    let table = delay_consensus::export::parse_trace(&bytes).unwrap();
    let q = table.series("q_3_2").unwrap();
    let expected: Vec<f64> = (0..trace.len()).map(|k| trace.row(&trace.agents[2].q, k)[1]).collect();
    assert_eq!(q, expected);
}

#[test]
fn analyze_prediction_matches_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_path("leaderless6");
    assert!(run_in(dir.path(), &["analyze", path.to_str().unwrap()]).status.success());
    assert!(run_in(dir.path(), &["simulate", path.to_str().unwrap(), "--duration", "30", "--stride", "100"]).status.success());
    let report = read_json(&dir.path().join("leaderless6.analysis.json"));
    let metrics = read_json(&dir.path().join("leaderless6.metrics.json"));
    assert!(close(&floats(&report["predicted_velocity"]), &floats(&metrics["simulated_velocity"]), 1e-2));
}

#[test]
fn output_path_in_config_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = shipped_json("di6");
    cfg["output"] = json!({"path": dir.path().join("nested/run.trace.csv")});
    cfg["sim"]["duration"] = json!(1.0);
    let p = write_config(dir.path(), "cfg", &cfg);
    let out = Command::new(BIN).args(["simulate", p.to_str().unwrap()]).env_remove("DELAY_CONSENSUS_OUT").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("nested/run.trace.csv").exists());
    assert!(dir.path().join("nested/run.metrics.json").exists());
}
