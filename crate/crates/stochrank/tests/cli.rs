//! Runs the built binary against small configs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stochrank(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochrank"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn small_two_atom() -> Value {
    json!({
        "model": {
            "id": "small",
            "strata": [{ "start": 0.0, "end": 1.0, "law": { "atoms": [[1.0, 0.5], [2.0, 0.5]] } }]
        },
        "n": 500,
        "seed": 3,
        "horizon": 1.0,
        "checkpoints": [0.5, 1.0],
        "grid": { "times": [0.0, 0.5, 1.0], "ys": [0.2, 0.5, 0.8] }
    })
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn header(path: &Path) -> csv::StringRecord {
    csv::Reader::from_path(path).unwrap().headers().unwrap().clone()
}

fn column(path: &Path, name: &str) -> usize {
    header(path).iter().position(|h| h == name).unwrap()
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = stochrank(&["simulate"], &dir.path().join("nope.cfg"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.cfg"));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_two_atom();
    cfg["convergence"] = json!({ "replicas": 0 });
    let out = stochrank(&["convergence"], &write_config(dir.path(), &cfg), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replicas"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_two_atom());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(stochrank(&["simulate"], &cfg, &a).status.success());
    assert!(stochrank(&["simulate"], &cfg, &b).status.success());
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "trajectory.csv"));
    assert!(names.iter().any(|n| n == "snapshot_001.csv"));
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_two_atom());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(stochrank(&["simulate"], &cfg, &a).status.success());
    assert!(stochrank(&["simulate", "--seed", "3"], &cfg, &b).status.success());
    assert!(stochrank(&["simulate", "--seed", "4"], &cfg, &c).status.success());
    let read = |d: &Path| fs::read(d.join("snapshot_001.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn worked_example_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = stochrank(&["simulate"], &configs().join("worked-example.cfg"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("arrangements.csv"));
    let seq: Vec<&str> = rows.iter().map(|r| &r[1]).collect();
    assert_eq!(seq, ["3 1 2 4", "1 3 2 4", "2 1 3 4", "4 2 1 3", "1 4 2 3"]);
}

#[test]
fn limit_tables_for_single_atom() {
    let dir = tempfile::tempdir().unwrap();
    let out = stochrank(&["limit"], &configs().join("delta-one.cfg"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let curve = dir.path().join("curve.csv");
    let at_one = csv_rows(&curve).into_iter().find(|r| &r[0] == "1").unwrap();
    let yc: f64 = at_one[1].parse().unwrap();
    assert!((yc - (1.0 - (-1f64).exp())).abs() < 1e-6, "{yc}");

    let field = dir.path().join("field.csv");
    let (y, t, flow, regime) = (column(&field, "y"), column(&field, "t"), column(&field, "flow"), column(&field, "regime"));
    let rows = csv_rows(&field);
    for r in rows.iter().filter(|r| &r[t] == "0") {
        assert_eq!(r[flow].parse::<f64>().unwrap(), r[y].parse::<f64>().unwrap());
    }
    // Each grid time adds its boundary point (y = 0 at t = 0), reported from both sides.
    let boundary: Vec<_> = rows.iter().filter(|r| r[regime].starts_with("boundary")).collect();
    assert_eq!(boundary.len(), 8);
    assert!(rows.iter().any(|r| &r[regime] == "head") && rows.iter().any(|r| &r[regime] == "tail"));
}

#[test]
fn convergence_small_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_two_atom();
    cfg["grid"] = json!({ "times": [0.5, 1.0], "ys": [0.3, 0.6, 0.9] });
    cfg["convergence"] = json!({ "ns": [400, 1600, 6400], "replicas": 20, "statistics": ["w"] });
    let out_dir = dir.path().join("out");
    let out = stochrank(&["convergence"], &write_config(dir.path(), &cfg), &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("convergence_summary.txt")).unwrap();
    assert!(summary.contains("statistic[g=w]"));
    assert!(!summary.contains("g=1"));
}

#[test]
fn zero_coefficient_fails_naming_the_observable() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_two_atom();
    cfg["convergence"] = json!({ "ns": [100, 200, 400], "replicas": 4, "statistics": ["w"], "flow_coefficient": 0.0 });
    let out = stochrank(&["convergence"], &write_config(dir.path(), &cfg), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().any(|l| l.starts_with("FAIL flow")), "{stderr}");
}
