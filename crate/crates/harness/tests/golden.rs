//! End-to-end tests of the command-line binary: exit codes, output file
//! shapes, manifest integrity, and determinism knobs.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_replaylab"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary spawns")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn unknown_config_key_is_rejected_with_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "experiment": "variance", "alpha": 0.5 }"#);
    let out = run_in(tmp.path(), &["variance", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("alpha"), "stderr names the key: {stderr}");
    assert!(
        !tmp.path().join("manifest.json").exists(),
        "config errors write nothing"
    );
}

#[test]
fn infeasible_pair_is_named_with_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "n_grid": [5], "k_grid": [10] }"#);
    let out = run_in(tmp.path(), &["variance", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("(N=5, K=10)"),
        "stderr names the offending pair: {stderr}"
    );
}

#[test]
fn mismatched_experiment_name_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "experiment": "autocov" }"#);
    let out = run_in(tmp.path(), &["variance", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("autocov") && stderr.contains("variance"));
}

#[test]
fn unknown_flag_prints_usage_with_exit_one() {
    let out = bin().args(["variance", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "usage goes to stderr: {stderr}");
}

#[test]
fn help_exits_zero_and_lists_subcommands() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in [
        "kernel-check",
        "autocov",
        "diff-n",
        "diff-k",
        "diff-p",
        "variance",
        "ac-train",
        "ac-verify",
    ] {
        assert!(stdout.contains(name), "help lists {name}");
    }
}

#[test]
fn kernel_check_writes_verifiable_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["kernel-check", "--n-max", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches(": PASS").count(), 3);

    let m = manifest(tmp.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "kernel-check");
    assert_eq!(m["config"]["n_max"], 3);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 3);
    for o in outputs {
        let path = tmp.path().join(o["path"].as_str().unwrap());
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(
            replaylab::manifest::sha256_hex(&bytes),
            o["sha256"].as_str().unwrap(),
            "digest matches file content"
        );
        assert_eq!(o["partial"], false);
    }
    let n1 = std::fs::read_to_string(tmp.path().join("kernel_n1.csv")).unwrap();
    assert_eq!(n1, "tau_prime,prob_num,prob_den\n0,1,1\n");
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "n_grid": [5], "k_grid": [2], "horizon": 500, "num_seeds": 4 }"#,
    );
    let dir1 = tmp.path().join("one");
    let dir4 = tmp.path().join("four");
    let a = bin()
        .args(["variance", "--config", &cfg, "--jobs", "1", "--out"])
        .arg(&dir1)
        .output()
        .unwrap();
    let b = bin()
        .args(["variance", "--config", &cfg, "--jobs", "4", "--out"])
        .arg(&dir4)
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let va = std::fs::read(dir1.join("variance.csv")).unwrap();
    let vb = std::fs::read(dir4.join("variance.csv")).unwrap();
    assert_eq!(va, vb, "worker count must not leak into the data");
}

#[test]
fn zero_jobs_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["kernel-check", "--jobs", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn svg_flag_gates_plot_emission() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "horizon": 50 }"#);
    let with = tmp.path().join("with");
    let without = tmp.path().join("without");
    let a = bin()
        .args(["ac-train", "--config", &cfg, "--svg", "--out"])
        .arg(&with)
        .output()
        .unwrap();
    let b = bin()
        .args(["ac-train", "--config", &cfg, "--out"])
        .arg(&without)
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert!(with.join("ac.svg").exists());
    assert!(!without.join("ac.svg").exists());
    assert!(without.join("ac.csv").exists());
}

#[test]
fn base_seed_flag_overrides_config_and_changes_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "horizon": 50, "base_seed": 1 }"#);
    let mut contents = Vec::new();
    for (sub, seed) in [("a", "1"), ("b", "2"), ("c", "2")] {
        let dir = tmp.path().join(sub);
        let out = bin()
            .args(["ac-train", "--config", &cfg, "--base-seed", seed, "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let m = manifest(&dir);
        assert_eq!(m["config"]["base_seed"], seed.parse::<u64>().unwrap());
        contents.push(std::fs::read(dir.join("ac.csv")).unwrap());
    }
    assert_ne!(contents[0], contents[1], "different seeds, different data");
    assert_eq!(contents[1], contents[2], "same seed, same bytes");
}

#[test]
fn trace_and_variance_headers_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "n_grid": [4], "k_grid": [2], "horizon": 300, "num_seeds": 2 }"#,
    );
    let out = run_in(tmp.path(), &["variance", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let variance = std::fs::read_to_string(tmp.path().join("variance.csv")).unwrap();
    assert_eq!(variance.lines().next().unwrap(), "t,variance,method,n,k");
    let trace = std::fs::read_to_string(tmp.path().join("trace_online.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "t,eta");
    assert_eq!(trace.lines().count(), 301);
    let m = manifest(tmp.path());
    let runs = m["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4, "two methods times two seeds");
    let ids: std::collections::BTreeSet<u64> =
        runs.iter().map(|r| r["stream_id"].as_u64().unwrap()).collect();
    assert_eq!(ids.len(), 4, "stream ids are unique");
}

#[test]
fn ac_snapshot_header_carries_weight_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "horizon": 40 }"#);
    let out = run_in(tmp.path(), &["ac-train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let ac = std::fs::read_to_string(tmp.path().join("ac.csv")).unwrap();
    assert_eq!(
        ac.lines().next().unwrap(),
        "t,eta,w_0,w_1,w_2,w_3,theta_norm,projection_active"
    );
}

#[test]
fn lags_csv_mixes_empirical_and_predicted_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "horizon": 2000 }"#);
    let out = run_in(tmp.path(), &["autocov", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lags = std::fs::read_to_string(tmp.path().join("lags.csv")).unwrap();
    assert_eq!(lags.lines().next().unwrap(), "lag,value,stderr,kind");
    let kinds: std::collections::BTreeSet<&str> = lags
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert!(kinds.contains("empirical_markov_n10_k3"));
    assert!(kinds.contains("predicted_markov_n10"));
    assert!(kinds.contains("predicted_iid_n20"));
}
