use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dara(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dara"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = dara(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Small budgets so the whole pipeline runs in seconds.
const TINY: &str = r#"{
  "telemetry": {"runs": 4, "cycles": 80},
  "env": {"cycles": 12},
  "dqn": {"hidden": [16, 16], "batch": 8, "memory": 200},
  "agent_episodes": 2,
  "ablation": {"runs": 2, "eval_episodes": 1},
  "calibration": {"iterations": 2, "episodes_per_candidate": 1}
}"#;

#[test]
fn gen_trace_defaults_reproduce_the_burst_pattern() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-trace", "--out", "burst.trace"]);
    let lines: Vec<u64> = fs::read_to_string(dir.path().join("burst.trace")).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(lines.len(), 613);
    assert!(lines.windows(2).all(|w| w[0] <= w[1]));
    // burst phase first: 583 opportunities in 700 ms
    assert_eq!(lines.iter().filter(|&&t| t < 700).count(), 583);
    let meta = json(&dir.path().join("burst.trace.meta.json"));
    assert_eq!(meta["seed"], 0);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn gen_trace_stable_path() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-trace", "--stable", "1.8mbps", "--duration-ms", "10000", "--out", "stable.trace"]);
    let meta = json(&dir.path().join("stable.trace.meta.json"));
    let rate = meta["mean_rate_bps"].as_f64().unwrap();
    assert!((rate - 1.8e6).abs() / 1.8e6 < 0.01, "{rate}");
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dara(dir.path(), &["gen-trace", "--burst-rate", "fast", "--out", "x"]).status.code(), Some(1));
    assert_eq!(dara(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(dara(dir.path(), &["simulate", "--scheduler", "bogus", "--out", "m.json"]).status.code(), Some(1));
    assert_eq!(dara(dir.path(), &["simulate", "--scheduler", "static:50", "--out", "m.json"]).status.code(), Some(1));
    assert_eq!(dara(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dara(dir.path(), &["train-predictor", "--telemetry", "missing.csv", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_seeded_and_labelled() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("a.json", "4"), ("b.json", "4"), ("c.json", "5")] {
        ok(dir.path(), &["--seed", seed, "simulate", "--scheduler", "static:65", "--duration-ms", "3000", "--out", name]);
    }
    let (a, b, c) = (json(&dir.path().join("a.json")), json(&dir.path().join("b.json")), json(&dir.path().join("c.json")));
    assert_eq!(a, b);
    assert_ne!(a["goodput_mbps"], c["goodput_mbps"]);
    assert_eq!(a["seed"], 4);
    assert_eq!(a["throughput_mbps"].as_array().unwrap().len(), 30);
    for key in ["goodput_mbps", "mean_delay_ms", "median_delay_ms", "jitter_ms", "ofo_count", "hol_delay_ms"] {
        assert!(a.get(key).is_some(), "{key}");
    }
    ok(dir.path(), &["simulate", "--scheduler", "minrtt", "--single-path", "1", "--duration-ms", "2000", "--out", "single.json"]);
    assert_eq!(json(&dir.path().join("single.json"))["paths"], 1);
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.json"), TINY).unwrap();
    let cfg = ["--config", "tiny.json"];
    let run = |args: &[&str]| ok(d, &[&cfg[..], args].concat());

    run(&["gen-telemetry", "--out", "telemetry.csv"]);
    let text = fs::read_to_string(d.join("telemetry.csv")).unwrap();
    assert!(text.starts_with("# config_hash="));
    assert_eq!(text.matches("# run=").count(), 4);

    run(&["train-predictor", "--telemetry", "telemetry.csv", "--arch", "linear", "--out", "linear.json"]);
    let metrics = json(&d.join("linear.json.metrics.json"));
    assert_eq!(metrics["arch"], "linear");
    assert_eq!(metrics["nrmse_per_horizon_ms"].as_object().unwrap().len(), 5);

    run(&["train-agent", "--predictor", "linear.json", "--out", "policy.json", "--cycle-log", "cycles.csv"]);
    let log = fs::read_to_string(d.join("policy.json.episodes.csv")).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 3);
    // header plus 2 episodes of 12 cycles, state of 18 entries
    let cycles = fs::read_to_string(d.join("cycles.csv")).unwrap();
    let rows: Vec<&str> = cycles.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1 + 2 * 12);
    assert_eq!(rows[0].split(',').count(), 2 + 18 + 1 + 2 + 6 + 1);

    run(&["simulate", "--scheduler", "dara:policy.json", "--duration-ms", "1500", "--out", "dara.json"]);
    assert!(json(&d.join("dara.json"))["goodput_mbps"].as_f64().unwrap() > 0.0);

    for dir_name in ["ab1", "ab2"] {
        run(&["ablate", "--predictor", "linear.json", "--methods", "dara,reactive,static-30", "--out-dir", dir_name]);
    }
    let methods = fs::read_to_string(d.join("ab1/methods.csv")).unwrap();
    assert_eq!(methods, fs::read_to_string(d.join("ab2/methods.csv")).unwrap());
    assert!(methods.contains("preemptive_rate"));
    assert_eq!(methods.lines().filter(|l| !l.starts_with('#')).count(), 4);
    assert!(d.join("ab1/comparisons.csv").exists() && d.join("ab1/runs.csv").exists());

    run(&["calibrate-weights", "--predictor", "linear.json", "--out", "board.csv"]);
    let board = fs::read_to_string(d.join("board.csv")).unwrap();
    assert_eq!(board.lines().filter(|l| !l.starts_with('#')).count(), 3);

    // only 2, 3, 5 and 7 levels are supported
    let out = dara(d, &[&cfg[..], &["train-agent", "--predictor", "linear.json", "--action-levels", "4", "--out", "bad.json"]].concat());
    assert_eq!(out.status.code(), Some(1));
}
