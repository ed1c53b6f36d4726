//! End-to-end checks of the installed binary: flag handling, artifact
//! headers, error records, and cross-worker-count determinism.

use std::path::Path;
use std::process::{Command, Output};

const SCAN_CONFIG: &str = "\
seed = 11

[model]
kind = \"simple\"

[prior]
lo = [0.0]
hi = [1.0]

[noise]
sigma = 0.01

[design]
lo = [0.0]
hi = [1.0]

[estimator]
n_out = 200
n_in = 200

[scan]
nodes = [11]
";

fn oed(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oed"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn scan_writes_provenance_headers_and_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SCAN_CONFIG);
    let out = oed(&["scan", "--config", &config, "--out", "run"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(dir.path().join("run/scan.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# seed: 11");
    let config_json = lines[1].strip_prefix("# config: ").unwrap();
    let parsed: serde_json::Value = serde_json::from_str(config_json).unwrap();
    assert_eq!(parsed["seed"], 11);
    assert_eq!(parsed["estimator"]["n_out"], 200);
    assert_eq!(lines[2], "d_1,eig,std_err,n_out,n_in");
    assert_eq!(lines.len(), 3 + 11);
    assert!(lines[3].starts_with("0,"));
    assert!(lines.last().unwrap().starts_with("1,"));
}

#[test]
fn set_and_seed_overrides_land_in_the_embedded_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SCAN_CONFIG);
    let out = oed(
        &[
            "scan",
            "--config",
            &config,
            "--out",
            "run",
            "--seed",
            "12",
            "--set",
            "estimator.n_out=300",
            "--set",
            "estimator.n_in=300",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(dir.path().join("run/scan.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# seed: 12");
    let parsed: serde_json::Value =
        serde_json::from_str(lines[1].strip_prefix("# config: ").unwrap()).unwrap();
    assert_eq!(parsed["seed"], 12);
    assert_eq!(parsed["estimator"]["n_out"], 300);
    assert!(lines[3].ends_with(",300,300"));
}

#[test]
fn unknown_config_keys_produce_a_json_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("{SCAN_CONFIG}\n[scann]\nnodes = [3]\n"));
    let out = oed(&["scan", "--config", &config], dir.path());
    assert!(!out.status.success());

    let stderr = String::from_utf8_lossy(&out.stderr);
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(
        record["error"].as_str().unwrap().contains("scann"),
        "unexpected record: {record}"
    );
}

#[test]
fn reuse_with_mismatched_counts_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SCAN_CONFIG);
    let out = oed(
        &["scan", "--config", &config, "--set", "estimator.n_in=100"],
        dir.path(),
    );
    assert!(!out.status.success());

    let stderr = String::from_utf8_lossy(&out.stderr);
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(
        record["error"].as_str().unwrap().contains("reuse"),
        "unexpected record: {record}"
    );
}

#[test]
fn worker_count_does_not_change_artifact_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SCAN_CONFIG);
    for (out_dir, workers) in [("one", "1"), ("four", "4")] {
        let out = oed(
            &["scan", "--config", &config, "--out", out_dir, "--workers", workers],
            dir.path(),
        );
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let one = std::fs::read(dir.path().join("one/scan.csv")).unwrap();
    let four = std::fs::read(dir.path().join("four/scan.csv")).unwrap();
    assert_eq!(one, four);
}

#[test]
fn validate_rejects_unknown_criterion_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out = oed(&["validate", "--criteria", "13"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(record["error"].as_str().unwrap().contains("13"));
}

#[test]
fn validate_runs_a_selected_criterion_and_prints_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = oed(&["validate", "--criteria", "6"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("criterion 06 quadrature-exactness: PASS"),
        "unexpected output: {stdout}"
    );
}
