use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn pap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pap")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr holds one JSON object")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn solve_two_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.json");
    let o = pap(&["solve", "--config", &config("twocell.json"), "--signal", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["power"], 0.5);
    assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["seed"], 20_240_601);
    assert_eq!(v["extremality"]["is_extremal"], true);
}

#[test]
fn solve_at_zero_size_rejects_nothing() {
    let o = pap(&["solve", "--config", &config("twocell.json"), "--alpha", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["power"], 0.0);
    assert!(v["rule"]["entries"].as_array().unwrap().iter().all(|e| e["value"] == 0.0));
}

#[test]
fn power_csv_carries_digest_and_seed() {
    let o = pap(&["power", "--config", &config("motivating_n2.json"), "--reps", "10000", "--seed", "5", "--kinds", "a1,a5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    let stamp = lines.next().unwrap();
    assert!(stamp.starts_with("# config_sha256=") && stamp.ends_with(" seed=5"), "{stamp}");
    assert_eq!(lines.next(), Some("theta,rule,power,se"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&first[..2], &["0", "a1"]);
    assert!((first[2].parse::<f64>().unwrap() - 0.05).abs() < 1e-12);
    assert_eq!(text.lines().count(), 2 + 31 * 2);
}

#[test]
fn naive_rule_over_ten_statistics_exceeds_size() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("discretized_n10.json");
    let rule = dir.path().join("naive_n10.json");
    let o = pap(&[
        "discretize",
        "--config",
        &config("motivating_n10.json"),
        "--problem-out",
        problem.to_str().unwrap(),
        "--rule-out",
        rule.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = pap(&["check", "--rule", rule.to_str().unwrap(), "--problem", problem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["size"]["max_size"].as_f64().unwrap() > 0.4);
    assert_eq!(v["passed"], false);
    assert_eq!(v["monotonicity"]["total_violations"], 0);
}

#[test]
fn validation_failures_exit_two_with_json() {
    let o = pap(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["code"], "usage");

    let o = pap(&["solve", "--config", "/nonexistent/problem.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["code"], "io");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = pap(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["code"], "syntax");

    let o = pap(&["power", "--config", &config("motivating_n2.json"), "--reps", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("reps"));

    let o = pap(&["power", "--config", &config("motivating_n2.json"), "--set", "alpha=\"high\""]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!((e["code"].as_str(), e["field_path"].as_str()), (Some("schema"), Some("alpha")));

    let o = pap(&["solve", "--config", &config("twocell.json"), "--set", "signals.0.joint.0=0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["field_path"], "signals[0].joint");

    let o = pap(&["solve", "--config", &config("twocell.json"), "--seed", "0"]);
    assert_eq!(o.status.code(), Some(2));

    let o = pap(&["casestudy", "--config", &config("twocell.json"), "--map-out", "/tmp/never.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let o = pap(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("casestudy"));
}

#[test]
fn unwritable_output_exits_two() {
    let o = pap(&["solve", "--config", &config("twocell.json"), "--out", "/nonexistent/dir/sol.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["code"], "io");
}

#[test]
fn overrides_change_the_digest() {
    let run = |extra: &[&str]| {
        let mut args = vec!["solve", "--config", &config("twocell.json")].into_iter().map(String::from).collect::<Vec<_>>();
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let v: Value = serde_json::from_slice(&pap(&refs).stdout).unwrap();
        v["config_sha256"].as_str().unwrap().to_string()
    };
    assert_eq!(run(&[]), run(&[]));
    assert_ne!(run(&[]), run(&["--set", "alpha=0.1"]));
    assert_eq!(run(&["--alpha", "0.1"]), run(&["--set", "alpha=0.1"]));
}
