use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn rectif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rectif")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let file = dir.join(name);
    let mut all = vec!["gen"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", path(&file)]);
    let o = rectif(&all);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    file
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn gen_writes_csv_measure() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "c.csv", &["four-corner-cantor", "--generation", "3"]);
    let text = std::fs::read_to_string(f).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).count();
    // 64 atoms, plus the header row.
    assert!(rows == 64 || rows == 65, "{rows}");
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "g.csv", &["lipschitz-graph", "--count", "400", "--slope", "0.05"]);
    let ok = rectif(&["check", path(&f), "--center", "0,0", "--size", "0.5"]);
    assert_eq!(ok.status.code(), Some(0));
    let rep = json(&ok);
    assert_eq!(rep["schema"], 1);
    assert_eq!(rep["checker"], "ball");

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"lambda": 0.1}"#).unwrap();
    let gated = ["check", path(&f), "--center", "0,0", "--size", "0.5", "--config", path(&cfg)];
    let plain = rectif(&gated);
    assert_eq!(plain.status.code(), Some(0));
    assert_eq!(json(&plain)["overall"], false);
    let mut strict = gated.to_vec();
    strict.push("--strict");
    assert_eq!(rectif(&strict).status.code(), Some(2));

    let missing = rectif(&["check", "/nonexistent.csv", "--center", "0,0", "--size", "0.5"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    std::fs::write(&cfg, r#"{"c0": -1.0}"#).unwrap();
    assert_eq!(rectif(&gated).status.code(), Some(1));
}

#[test]
fn check_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "g.csv", &["segment", "--count", "300"]);
    let a = rectif(&["check", path(&f), "--checker", "density-scaled", "--center", "0,0", "--size", "0.4"]);
    let b = rectif(&["check", path(&f), "--checker", "density-scaled", "--center", "0,0", "--size", "0.4"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["checker"], "density_scaled");
}

#[test]
fn scan_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "p.csv", &["plane", "--count", "400"]);
    let out = dir.path().join("scan.json");
    let csv = dir.path().join("scan.csv");
    let o = rectif(&[
        "scan", path(&f), "--centers", "0,0;0.2,0", "--sizes", "0.2,0.3", "--csv", path(&csv), "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(s["schema"], 1);
    assert_eq!(s["reports"].as_array().unwrap().len(), 4);
    let rows: usize = s["reports"].as_array().unwrap().iter().map(|r| r["hypotheses"].as_array().unwrap().len()).sum();
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), rows + 1);
    let r = rectif(&["report", path(&out)]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("4 reports"));
    assert_eq!(rectif(&["report"]).status.code(), Some(1));
}

#[test]
fn coeffs_potential_and_lattice_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "s.csv", &["segment", "--count", "200"]);
    let c = rectif(&["coeffs", path(&f), "--ball", "0,0,0.5"]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    json(&c);
    let p = rectif(&["potential", path(&f), "--point", "0.1,0.3", "--eps-schedule", "0.2,0.1,0.05"]);
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    json(&p);
    let l = rectif(&["lattice", path(&f), "--audit"]);
    assert!(l.status.success(), "{}", String::from_utf8_lossy(&l.stderr));
    let v = json(&l);
    assert!(!v["cells"].as_array().unwrap().is_empty());
    assert_eq!(v["regime_deviation"], true);
}

#[test]
fn bad_arguments_fail() {
    assert_eq!(rectif(&["check"]).status.code(), Some(1));
    assert_eq!(rectif(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "s.csv", &["segment", "--count", "50"]);
    assert_eq!(rectif(&["coeffs", path(&f), "--ball", "0,0,abc"]).status.code(), Some(1));
}
