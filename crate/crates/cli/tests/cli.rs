use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn maln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maln"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

#[test]
fn bounds_examples() {
    let v = json_of(&maln(&["bounds", "--class", "lip-convex", "--n", "4", "--M", "1", "--R", "1", "--eps", "0.1"]));
    assert_eq!(v["result"]["value"], 0.025);
    assert_eq!(v["result"]["dominant_branch"], "eps/n");
    assert_eq!(v["seed"], 0);
    assert_eq!(v["config"]["class"], "lip-convex");

    let v = json_of(&maln(&["bounds", "--class", "lip-sg", "--nu", "1", "--mu", "1", "--M", "1", "--n", "100", "--eps", "0.01"]));
    assert_eq!(v["result"]["value"], 0.001);
    assert_eq!(v["result"]["second"], 0.0001);
}

#[test]
fn missing_constant_is_a_usage_error() {
    let out = maln(&["bounds", "--class", "smooth-convex", "--n", "1", "--R", "1", "--eps", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`L`"));
}

#[test]
fn unknown_names_are_usage_errors() {
    assert_eq!(maln(&["solve", "--algo", "nelder-mead", "--eps", "0.1"]).status.code(), Some(2));
    assert_eq!(maln(&["solve", "--family", "sphere", "--eps", "0.1"]).status.code(), Some(2));
    assert_eq!(maln(&["bounds", "--class", "lip", "--eps", "0.1"]).status.code(), Some(2));
    assert_eq!(maln(&["solve", "--algo", "grid1d"]).status.code(), Some(2));
    assert_eq!(maln(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("missing").join("out.json");
    let out = maln(&["bounds", "--class", "lip-convex", "--n", "4", "--M", "1", "--R", "1", "--eps", "0.1", "--out", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_grid_example() {
    let v = json_of(&maln(&["solve", "--algo", "grid1d", "--family", "pwl", "--M", "1", "--eps", "0.2", "--delta", "0", "--seed", "1"]));
    let gap = v["result"]["report"]["gap"].as_f64().unwrap();
    assert!(gap <= 0.1, "{gap}");
    assert_eq!(v["seed"], 1);
    assert_eq!(v["result"]["instance"]["seed"], 1);
}

#[test]
fn solve_logs_every_call() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls.jsonl");
    let v = json_of(&maln(&[
        "solve", "--algo", "simplex", "--n", "2", "--eps", "0.5", "--delta", "0.05", "--seed", "3",
        "--log", log.to_str().unwrap(),
    ]));
    let calls = v["result"]["report"]["calls"].as_u64().unwrap();
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len() as u64, calls);
    assert_eq!(lines.last().unwrap()["cumulative_calls"], calls);
    assert_eq!(v["config"]["policy"], "uniform");
}

#[test]
fn solve_restart_reports_each_restart() {
    let v = json_of(&maln(&["solve", "--algo", "restart", "--n", "2", "--M", "2", "--mu", "1", "--eps", "0.1", "--seed", "2"]));
    let restarts = v["result"]["restarts"].as_array().unwrap();
    assert!(!restarts.is_empty());
    assert_eq!(v["config"]["family"], "quadratic");
}

#[test]
fn schedule_example_has_nine_rows() {
    let out = maln(&["schedule", "--case", "lip-sg", "--mu", "1", "--R", "1", "--nu", "2", "--eps", "0.0009765625", "--format", "csv"]);
    assert!(out.status.success());
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[2..7], ["k", "regime", "delta_k", "N_k", "eps_k"]);
    assert_eq!(r.records().count(), 9);
}

fn run_to(args: &[&str], path: &Path) -> Vec<u8> {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", path.to_str().unwrap()]);
    let out = maln(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read(path).unwrap()
}

#[test]
fn maln_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let plot_a = dir.path().join("pa.csv");
    let plot_b = dir.path().join("pb.csv");
    let args = ["maln", "--algo", "simplex", "--n", "2", "--eps", "0.3", "--trials", "50", "--seed", "42"];
    let mut a_args = args.to_vec();
    a_args.extend(["--emit-plot-data", plot_a.to_str().unwrap()]);
    let mut b_args = args.to_vec();
    b_args.extend(["--emit-plot-data", plot_b.to_str().unwrap(), "--jobs", "2"]);
    let a = run_to(&a_args, &dir.path().join("a.json"));
    let b = run_to(&b_args, &dir.path().join("b.json"));
    assert_eq!(a, b);
    assert_eq!(std::fs::read(&plot_a).unwrap(), std::fs::read(&plot_b).unwrap());
    let v: Value = serde_json::from_slice(&a).unwrap();
    let lo = v["result"]["delta_lo"].as_f64().unwrap();
    let hi = v["result"]["delta_hi"].as_f64().unwrap();
    assert!(lo < hi);
    assert!(v["result"]["comparison"]["flags"].as_array().unwrap().iter().any(|f| f == "asymptotic-in-n"));
}

#[test]
fn bench_sweeps_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "command = \"bounds\"\n[params]\nclass = \"lip-convex\"\nM = 1\nR = 1\neps = 0.1\n[sweep]\nn = [1, 4, 100]\n",
    )
    .unwrap();
    let v = json_of(&maln(&["bench", "--config", cfg.to_str().unwrap()]));
    let pts = v["result"]["points"].as_array().unwrap();
    assert_eq!(pts.len(), 3);
    assert_eq!(pts[1]["result"]["value"], 0.025);

    let v = json_of(&maln(&["bench", "--config", cfg.to_str().unwrap(), "--eps", "0.2", "--seed", "9"]));
    assert_eq!(v["config"]["eps"], 0.2);
    assert_eq!(v["seed"], 9);
    assert_eq!(v["result"]["points"][1]["result"]["value"], 0.05);

    let out = maln(&["bench", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(r.records().count(), 3);
}

#[test]
fn bench_rejects_unknown_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "command = \"bounds\"\n[params]\nclass = \"lip-convex\"\nepsilon = 0.1\n").unwrap();
    let out = maln(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn bench_maln_reports_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fit.toml");
    std::fs::write(
        &cfg,
        "command = \"maln\"\n[params]\nalgo = \"simplex\"\neps = 0.6\ntrials = 5\npolicy = \"sign\"\n[sweep]\nn = [2, 3]\n",
    )
    .unwrap();
    let v = json_of(&maln(&["bench", "--config", cfg.to_str().unwrap()]));
    assert!(v["result"]["fit"]["exponent"].is_f64());
}

#[test]
fn every_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "command = \"solve\"\n[params]\nalgo = \"separable\"\neps = 0.3\ndelta = 0.01\n[sweep]\nseed = [1, 2]\n").unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    let cases: Vec<Vec<&str>> = vec![
        vec!["bounds", "--class", "smooth-sg", "--n", "3", "--L", "2", "--mu", "1", "--nu", "2", "--eps", "0.05"],
        vec!["solve", "--algo", "separable", "--n", "3", "--eps", "0.3", "--delta", "0.05", "--seed", "4", "--format", "csv"],
        vec!["solve", "--algo", "base", "--n", "2", "--eps", "0.3", "--delta", "0.01", "--iterations", "200", "--seed", "4"],
        vec!["maln", "--algo", "grid1d", "--eps", "0.2", "--trials", "5", "--seed", "1"],
        vec!["schedule", "--case", "smooth-sg", "--L", "1", "--mu", "1", "--nu", "2", "--n", "4", "--eps", "0.001"],
        vec!["bench", "--config", &cfg, "--format", "csv"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let a = run_to(args, &dir.path().join(format!("{i}a")));
        let b = run_to(args, &dir.path().join(format!("{i}b")));
        assert_eq!(a, b, "{args:?}");
    }
}
