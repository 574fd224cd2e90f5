//! End-to-end runs of the `msaw` binary: exit codes, error reporting,
//! output files and determinism across thread counts.

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const QUARTIC_S0: &str = "0.4724703937105774";

fn small_config(extra: &str) -> String {
    format!(
        "[model]\ngamma = 1.0\nr_coeffs = [0.0, 1.0]\ns_coeffs = [{QUARTIC_S0}, 0.0, 0.0, 0.0, 1.0]\n\
         [lattice]\nd = 3\nL = 6\n\
         [run]\nT = 8.0\nreplicas = 40\nseed = 5\n{extra}"
    )
}

fn msaw(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_msaw"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .env("MSAW_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn report(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn without_wall_clock(mut doc: Value) -> Value {
    doc["metadata"].as_object_mut().unwrap().remove("wall_clock");
    doc
}

#[test]
fn threshold_exit_codes_follow_feasibility() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ok");
    let ok = msaw(
        tmp.path(),
        &small_config("[gsc]\nr = 2\n"),
        &["gsc-threshold", "--out", out.to_str().unwrap()],
    );
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("PASS threshold-rescan"));

    let path = out.join("gsc-threshold.json");
    let doc = report(&path);
    assert_eq!(doc["report"]["results"]["threshold"]["n1"], 17);
    assert_eq!(doc["metadata"]["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(fs::metadata(&path).unwrap().permissions().mode() & 0o777, 0o644);

    let bad = tmp.path().join("bad");
    let infeasible = msaw(
        tmp.path(),
        &small_config("[gsc]\nr = 1\n"),
        &["gsc-threshold", "--out", bad.to_str().unwrap()],
    );
    assert_eq!(infeasible.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&infeasible.stdout).contains("FAIL threshold-finite"));
    assert!(bad.join("gsc-threshold.json").exists());
}

#[test]
fn config_errors_are_listed_together_and_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = small_config("").replace("replicas = 40", "replicas = 0\nreplica = 3");
    let out = msaw(tmp.path(), &text, &["run-walk", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("replica"), "{err}");
    assert!(err.contains("replicas"), "{err}");
}

#[test]
fn non_elliptic_model_is_rejected_before_simulating() {
    let tmp = tempfile::tempdir().unwrap();
    let text = small_config("").replace(QUARTIC_S0, "0.0");
    let out = msaw(tmp.path(), &text, &["run-walk", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not elliptic"));
    assert!(!tmp.path().join("trajectories.jsonl").exists());
}

#[test]
fn run_walk_writes_one_record_per_replica_and_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("walk");
    let run = msaw(
        tmp.path(),
        &small_config(""),
        &["run-walk", "--seed", "77", "--out", out.to_str().unwrap()],
    );
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let doc = report(&out.join("run-walk.json"));
    assert_eq!(doc["metadata"]["seed"], 77);
    let samples = doc["report"]["results"]["sample_times"].as_array().unwrap().len();
    let text = fs::read_to_string(out.join("trajectories.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 40 * samples);
    assert_eq!(lines[0]["replica"], 0);
    assert_eq!(lines[0]["t"], 0.0);
    assert_eq!(lines.last().unwrap()["replica"], 39);
    assert_eq!(lines.last().unwrap()["t"], 8.0);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config("mcmc_sweeps = 20\n[checks]\nclt_t = 8.0\n");
    let mut docs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let run = msaw(
            tmp.path(),
            &config,
            &["sample-gibbs", "--threads", threads, "--out", out.to_str().unwrap()],
        );
        assert!(
            run.status.code().unwrap() <= 1,
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
        let walk = msaw(
            tmp.path(),
            &config,
            &["estimate", "--threads", threads, "--out", out.to_str().unwrap()],
        );
        assert!(
            walk.status.code().unwrap() <= 1,
            "{}",
            String::from_utf8_lossy(&walk.stderr)
        );
        docs.push(out);
    }
    for file in ["fields.bin", "green.csv", "msd.csv"] {
        assert_eq!(
            fs::read(docs[0].join(file)).unwrap(),
            fs::read(docs[1].join(file)).unwrap(),
            "{file}"
        );
    }
    for file in ["sample-gibbs.json", "estimate.json"] {
        assert_eq!(
            without_wall_clock(report(&docs[0].join(file))),
            without_wall_clock(report(&docs[1].join(file))),
            "{file}"
        );
    }
}
