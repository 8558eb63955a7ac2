use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowtracker-lab"))
        .args(args)
        .env_remove("FLOWTRACKER_OUT")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const PAIR_PROCESS: &str = r#"{"n": 2, "horizon": 20.0, "pieces": [{"t": 0.0, "weights": [[0, 1], [1, 0]]}]}"#;

fn pair_config(extra: &str) -> String {
    format!(
        r#"{{
  "process": {{"source": "file", "path": "pair.json"}},
  "dynamics": {{"name": "averaging"}},
  "objective": {{"kind": "two-agent-paper-pair"}},
  "schedule": {{"kind": "constant", "a0": 0.5}},
  "initial": {{"kind": "explicit", "x": [0.0, 0.0]}},
  "t_end": 20.0,
  "h": 0.001{extra}
}}"#
    )
}

#[test]
fn scenario_list_and_show() {
    let out = lab(&["scenario", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["counterexample", "counterexample-diminishing", "averaging-ergodic", "pushsum-directed", "saddlepoint-mincut", "spps-stationary"] {
        assert!(text.contains(name), "{name} missing");
    }
    let shown = stdout_json(&lab(&["scenario", "show", "spps-stationary"]));
    assert_eq!(shown["dynamics"]["a"], 5.0);
    assert_eq!(shown["dynamics"]["name"], "spps");
}

#[test]
fn run_counterexample_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["run", "--scenario", "counterexample", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = stdout_json(&out);
    let y = summary["limit"]["y"].as_array().unwrap();
    assert!((y[0].as_f64().unwrap() - 0.2).abs() < 1e-4);
    assert!((y[1].as_f64().unwrap() + 0.2).abs() < 1e-4);
    for name in ["trajectory.csv", "trajectory.jsonl", "report.json", "summary.json", "config.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x_1,x_2,y_1,y_2,u_1,u_2,xbar_1\n"), "{}", csv.lines().next().unwrap());
    assert_eq!(csv.lines().count(), 1 + 501);
}

#[test]
fn config_file_with_relative_process_and_full_resolution() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.json", PAIR_PROCESS);
    let cfg = write(dir.path(), "cfg.json", &pair_config(""));
    let out_dir = dir.path().join("out");
    let out = lab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--full-resolution", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = stdout_json(&out);
    assert_eq!(summary["seed"], 5);
    let rows = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 20_001);
}

#[test]
fn failing_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.json", PAIR_PROCESS);
    let extra = r#",
  "expect": {"final_output": [0.3, -0.3], "tolerance": 1e-4}"#;
    let cfg = write(dir.path(), "cfg.json", &pair_config(extra));
    let out = lab(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["checks"]["expect-final-output"], false);
}

#[test]
fn malformed_config_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{
  "process": {"source": "random", "n": 4, "model": "switching-complete", "dwell": 0.0005},
  "dynamics": {"name": "averaging"},
  "objective": {"kind": "huberized-quadratic", "n": 4, "d": 1, "params": {"random": {"seed": 1, "spread": 1.0}, "radius": 1.0}},
  "schedule": {"kind": "power-law", "a0": 1.0, "p": 1.0},
  "initial": {"kind": "random", "spread": 1.0},
  "t_end": 5.0,
  "h": 0.001
}"#,
    );
    let out_dir = dir.path().join("out");
    let out = lab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "invalid-input");
    let written: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("error.json")).unwrap()).unwrap();
    assert_eq!(written, err);
}

#[test]
fn unknown_scenario_lists_available() {
    let out = lab(&["run", "--scenario", "nope", "--out", tempfile::tempdir().unwrap().path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "unknown-scenario");
    assert_eq!(err["error"]["available"].as_array().unwrap().len(), 6);
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = lab(&["sweep", "--scenario", "counterexample", "--param", "schedule.a0", "--values", "0.25,0.5,1.0", "--out", d]);
    // Only a0 = 0.5 meets the preset's embedded expectation.
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    for (line, a) in lines[1..].iter().zip([0.25f64, 0.5, 1.0]) {
        let cells: Vec<&str> = line.split(',').collect();
        let y1: f64 = cells[4].parse().unwrap();
        assert!((y1 - a / (2.0 + a)).abs() < 1e-4);
    }

    let empty = tempfile::tempdir().unwrap();
    let out = lab(&["sweep", "--scenario", "counterexample", "--param", "schedule.a0", "--values", "", "--out", empty.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(std::fs::read_to_string(empty.path().join("sweep.csv")).unwrap().lines().count(), 1);

    let out = lab(&["sweep", "--scenario", "counterexample", "--param", "schedule.nope", "--values", "1", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["error"]["kind"], "invalid-input");
}

#[test]
fn check_flow_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let pair = write(dir.path(), "pair.json", PAIR_PROCESS);
    let d = dir.path().join("ok");
    let out = lab(&["check-flow", "--process", &pair, "--max-lag", "5", "--lag-step", "0.5", "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!((v["lambda"].as_f64().unwrap() - (-2f64).exp()).abs() < 1e-3);
    assert_eq!(v["p_star"], 1.0);
    assert!(d.join("flow.json").is_file() && d.join("flow_samples.csv").is_file());

    let split = write(
        dir.path(),
        "split.json",
        r#"{"n": 3, "horizon": 20.0, "pieces": [{"t": 0.0, "weights": [[0, 1, 0], [1, 0, 0], [0, 0, 0]]}]}"#,
    );
    let out = lab(&["check-flow", "--process", &split, "--out", dir.path().join("bad").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["ergodic"], false);
}

#[test]
fn check_schedule_verdicts() {
    let out = lab(&["check-schedule", "--schedule", r#"{"kind":"power-law","a0":1.0,"p":1.0}"#]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["valid"], true);
    let out = lab(&["check-schedule", "--scenario", "counterexample"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["square_integrable"], false);
    let out = lab(&["check-schedule", "--schedule", r#"{"kind":"power-law","a0":3.0,"p":1.0}"#]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_flowtracker-lab"))
        .args(["run", "--scenario", "counterexample"])
        .env("FLOWTRACKER_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("summary.json").is_file());
}

#[test]
fn selftest_passes() {
    let out = lab(&["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    assert!(text.lines().count() >= 8);
}
