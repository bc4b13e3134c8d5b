//! The binary end to end: flags and config files in, files and exit codes out.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CARNOT: &str = r#"{"period": 1.0, "pieces": [
    {"kind": "constant", "value": 4.0, "end": 0.5},
    {"kind": "constant", "value": 1.0}
]}"#;

fn heatengine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatengine")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = heatengine(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn summary(dir: &Path) -> Value {
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["header"]["version"], heatengine::VERSION);
    v["data"].clone()
}

/// Data rows of a CSV written by the tool, provenance lines skipped.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

/// Multiplier of the two-level bath T ∈ {4, 1} with equal halves, by
/// bisection on the periodicity condition written out for two levels.
fn two_level_mu(power: f64) -> f64 {
    let residual = |mu: f64| {
        let a = 0.5 * (4.0 * (4.0 + mu)).sqrt() + 0.5 * (1.0 + mu).sqrt();
        let b = 0.5 * 2.0 / (4.0 + mu).sqrt() + 0.5 / (1.0 + mu).sqrt();
        a * b - (2.5 - power)
    };
    let (mut lo, mut hi) = (0.0, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (residual(mid) < 0.0) == (residual(lo) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn carnot_maximum_power_summary() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s");
    run_ok(&["synthesize", "--profile", CARNOT, "--out", out.to_str().unwrap(), "--grid", "20"]);
    let s = summary(&out);
    assert!((s["max_power"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert!((s["efficiency"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert!(s["mu"].is_null());
    let rows = csv_rows(&out.join("protocol.csv"));
    assert_eq!(rows.len(), 20);
    // Σ_v ∝ √T: 2/1 between the hot and cold halves.
    assert!((num(&rows[0][3]) / num(&rows[15][3]) - 2.0).abs() < 1e-12);
}

#[test]
fn constant_bath_gives_zero_power_and_flat_protocol() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("k");
    let flat = r#"{"period": 2.0, "pieces": [{"kind": "constant", "value": 1.5}]}"#;
    run_ok(&["synthesize", "--profile", flat, "--out", out.to_str().unwrap(), "--grid", "8"]);
    assert_eq!(summary(&out)["max_power"].as_f64().unwrap(), 0.0);
    let q0 = num(&csv_rows(&out.join("protocol.csv"))[0][1]);
    for row in csv_rows(&out.join("protocol.csv")) {
        assert!((num(&row[1]) - q0).abs() < 1e-9 * q0, "{row:?}");
    }
}

#[test]
fn fixed_power_multiplier_matches_two_level_root() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p");
    run_ok(&["synthesize", "--profile", CARNOT, "--power", "0.125", "--out", out.to_str().unwrap()]);
    let s = summary(&out);
    let mu = s["mu"].as_f64().unwrap();
    let expected = two_level_mu(0.125);
    assert!((mu - expected).abs() < 1e-9 * expected, "{mu} vs {expected}");
    assert!((s["power_check"].as_f64().unwrap() - 0.125).abs() < 1e-10);
}

#[test]
fn tradeoff_batch_emits_one_curve_per_profile() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(dir.path().join("carnot.json"), CARNOT).unwrap();
    fs::write(
        &cfg,
        r#"{"profiles": [
            {"name": "carnot", "spec": "carnot.json"},
            {"name": "sine", "spec": {"period": 1.0, "pieces": [{"kind": "sinusoid", "mean": 2.5, "amplitude": 1.5}]}},
            {"name": "ramp", "spec": {"period": 1.0, "pieces": [{"kind": "sampled", "knots": [[0.0, 1.0], [0.7, 3.0], [1.0, 1.0]]}]}}
        ],
        "tradeoff": {"grid": 11},
        "out": "curves"}"#,
    )
    .unwrap();
    run_ok(&["tradeoff", "--config", cfg.to_str().unwrap()]);
    let rows = csv_rows(&dir.path().join("curves/tradeoff.csv"));
    assert_eq!(rows.len(), 33);
    for name in ["carnot", "sine", "ramp"] {
        let curve: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == name).collect();
        assert_eq!(curve.len(), 11);
        assert_eq!(num(&curve[0][3]), 1.0);
        let eta: Vec<f64> = curve.iter().map(|r| num(&r[3])).collect();
        assert!(eta.windows(2).all(|w| w[1] < w[0]), "{name}: {eta:?}");
    }
    let last = rows.iter().rfind(|r| r[0] == "carnot").unwrap();
    assert!((num(&last[3]) - 0.5).abs() < 1e-3);
    // The effective configuration carries the inlined profile file.
    let effective = fs::read_to_string(dir.path().join("curves/config.json")).unwrap();
    assert!(!effective.contains("carnot.json"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        run_ok(&["tradeoff", "--profile", CARNOT, "--grid", "9", "--out", out.to_str().unwrap()]);
        fs::read(out.join("tradeoff.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert!(String::from_utf8(a).unwrap().starts_with("# generator: heatengine\n"));
}

#[test]
fn json_format_wraps_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("j");
    run_ok(&["tradeoff", "--profile", CARNOT, "--grid", "3", "--format", "json", "--out", out.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("tradeoff.json")).unwrap()).unwrap();
    assert_eq!(v["header"]["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["data"].as_array().unwrap().len(), 3);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"profiles": [], "tradeof": {"grid": 3}}"#).unwrap();
    let out = heatengine(&["tradeoff", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field `tradeof`"));

    let out = heatengine(&["synthesize", "--profile", CARNOT, "--power", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = heatengine(&["synthesize", "--profile", r#"{"period": -1, "pieces": []}"#]);
    assert_eq!(out.status.code(), Some(2));
    let out = heatengine(&["synthesize"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_rows_are_sorted_and_failures_recorded() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sweep.json");
    // A two-level bath is not a single sinusoid: every linear-response
    // point fails while the optimal protocol runs.
    fs::write(
        &cfg,
        format!(
            r#"{{"profiles": [{{"name": "c", "spec": {CARNOT}}}],
                "params": {{"t_f": 1.0}},
                "sweep": {{"values": [0.03, 0.01], "protocols": ["linear_response", "low_friction_optimal"],
                           "options": {{"jump_ramp": 0.05}}}},
                "out": "sw"}}"#
        ),
    )
    .unwrap();
    run_ok(&["sweep", "--config", cfg.to_str().unwrap(), "--jobs", "1"]);
    let rows = csv_rows(&dir.path().join("sw/sweep.csv"));
    let keys: Vec<(f64, &str)> = rows.iter().map(|r| (num(&r[0]), r[1].as_str())).collect();
    assert_eq!(
        keys,
        [
            (0.01, "linear_response"),
            (0.01, "low_friction_optimal"),
            (0.03, "linear_response"),
            (0.03, "low_friction_optimal"),
        ]
    );
    for row in &rows {
        let failed = !row[9].is_empty();
        assert_eq!(failed, row[1] == "linear_response", "{row:?}");
    }
}

#[test]
fn seeded_montecarlo_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("mc.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"profiles": [{{"name": "c", "spec": {CARNOT}}}],
                "params": {{"q0": 100.0}},
                "montecarlo": {{"ensemble": {{"n_particles": 2000, "dt": 5e-4, "n_nodes": 10}},
                                "jump_ramp": 0.05, "start": "equilibrium"}}}}"#
        ),
    )
    .unwrap();
    let run = |sub: &str, jobs: &str| {
        let out = dir.path().join(sub);
        run_ok(&["montecarlo", "--config", cfg.to_str().unwrap(), "--seed", "7", "--jobs", jobs, "--out", out.to_str().unwrap()]);
        (fs::read(out.join("nodes.csv")).unwrap(), fs::read(out.join("summary.json")).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "2"));
    let rows = csv_rows(&dir.path().join("a/nodes.csv"));
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0].len(), 14);
}

#[test]
fn validate_runs_selected_checks() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v");
    let res = run_ok(&["validate", "--check", "1", "--check", "2", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("[PASS]  1 ") && stdout.contains("[PASS]  2 "), "{stdout}");
    let rows = csv_rows(&out.join("validation.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[2] == "true"));

    let res = heatengine(&["validate", "--check", "11", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}
