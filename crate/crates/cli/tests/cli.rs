use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn wfens() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wfens"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn validate_accepts_good_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.json", r#"{"experiment": "fig1a", "beta": 1, "lambdas": [-1, 0, 1]}"#);
    let out = wfens().args(["validate", "--config"]).arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");

    let bad = write_config(dir.path(), "bad.json", r#"{"experiment": "fig1a", "beta": -1, "lambdas": [0]}"#);
    let out = wfens().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));

    let unknown = write_config(dir.path(), "unknown.json", r#"{"experiment": "fig1a", "beta": 1, "lambdas": [0], "bogus": 3}"#);
    let out = wfens().args(["validate", "--config"]).arg(&unknown).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = wfens().args(["run", "--config", "/nonexistent/wfens.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fig1a_writes_the_free_energy_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"experiment": "fig1a", "beta": 1, "lambdas": {"start": -2, "stop": 2, "points": 5}}"#);
    let out_dir = dir.path().join("out");
    let st = wfens().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap().status;
    assert!(st.success());
    let csv = std::fs::read_to_string(out_dir.join("fig1a.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lambda,F_wf,F_std"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[2][0], 0.0);
    assert!(rows.iter().all(|r| r[1] != r[2]));
}

#[test]
fn fixed_seed_runs_are_identical_and_confined_to_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"experiment": "fig1b", "seed": 42, "samples": 5000}"#);
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let st = wfens()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--workers", workers, "--out"])
            .arg(&out)
            .current_dir(dir.path())
            .output()
            .unwrap()
            .status;
        assert!(st.success());
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for name in ["fig1b_histogram.csv", "fig1b_atoms.csv", "fig1b_jarzynski.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let mut top: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    top.sort();
    assert_eq!(top, ["a", "b", "c.json"]);
    assert_eq!(files_under(&a).len(), 4);
}

#[test]
fn seed_flag_and_environment_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"experiment": "work-dist", "seed": 1, "samples": 1000, "model": {"kind": "lz"}, "ensemble": {"kind": "uniform"}, "protocol": {"kind": "lz-half-sweep"}, "steps": {"fixed": 200}}"#,
    );
    let flag = dir.path().join("flag");
    let env = dir.path().join("env");
    assert!(wfens().args(["run", "--config"]).arg(&cfg).args(["--seed", "9", "--out"]).arg(&flag).output().unwrap().status.success());
    assert!(wfens().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&env).env("WFENS_SEED", "9").output().unwrap().status.success());
    assert_eq!(std::fs::read(flag.join("work.csv")).unwrap(), std::fs::read(env.join("work.csv")).unwrap());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(flag.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["seed"], 9);
}

#[test]
fn constant_protocol_gives_unit_jarzynski_average() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"experiment": "jarzynski", "samples": 2000, "model": {"kind": "lz"}, "ensemble": {"kind": "canonical", "beta": 1, "lambda": [0.5]}, "protocol": {"kind": "constant", "lambda": [0.5], "duration": 2}, "steps": {"fixed": 100}}"#,
    );
    let out = dir.path().join("out");
    assert!(wfens().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status.success());
    let csv = std::fs::read_to_string(out.join("jarzynski.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "estimate").unwrap();
    let est: f64 = row[col].parse().unwrap();
    assert!((est - 1.0).abs() < 1e-10, "{est}");
}

#[test]
fn manifest_reruns_the_same_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"experiment": "sample-ensemble", "seed": 3, "samples": 1000, "model": {"kind": "lz"}, "ensemble": {"kind": "microcanonical", "energy": 0.2, "lambda": [0.3]}}"#,
    );
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert!(wfens().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&first).output().unwrap().status.success());
    let manifest_path = first.join("manifest.json");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["manifest_version"], 1);
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["outputs"][0], "samples.csv");
    assert!(wfens().args(["run", "--config"]).arg(&manifest_path).arg("--out").arg(&second).output().unwrap().status.success());
    assert_eq!(std::fs::read(first.join("samples.csv")).unwrap(), std::fs::read(second.join("samples.csv")).unwrap());
}

#[test]
fn crooks_without_overlap_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    // A large splitting at low temperature leaves the forward and reverse work histograms apart.
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"experiment": "crooks", "samples": 1000, "beta": 30, "model": {"kind": "lz"}, "protocol": {"kind": "linear", "from": [-5], "to": [5], "duration": 0.5}, "steps": {"fixed": 100}}"#,
    );
    let out = dir.path().join("out");
    let res = wfens().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "inconclusive");
}
