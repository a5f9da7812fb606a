//! End-to-end checks of the `bandspec` binary: exit codes, file outputs,
//! and the operator-file schema.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bandspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bandspec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_temp(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const FREE_JACOBI: &str = r#"{"N":1,"r":1,"s":1,"kind":"constant",
    "diagonals":{"-1":[[1,0]],"0":[[0,0]],"1":[[1,0]]}}"#;

#[test]
fn validate_accepts_well_formed_operator() {
    let dir = tempfile::tempdir().unwrap();
    let op = write_temp(dir.path(), "op.json", FREE_JACOBI);
    let out = bandspec(&["validate", "--operator", op.to_str().unwrap(), "--K", "100"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("ok:"), "{text}");
    assert!(text.contains("realized bound 1"), "{text}");
}

#[test]
fn validate_rejects_missing_mandatory_offset_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let op = write_temp(
        dir.path(),
        "bad.json",
        r#"{"N":1,"r":1,"s":1,"kind":"constant","diagonals":{"-1":[[1,0]],"0":[[0,0]]}}"#,
    );
    let out = bandspec(&["validate", "--operator", op.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("mandatory offset"), "{text}");
}

#[test]
fn validate_reports_singular_extreme_diagonal_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let op = write_temp(
        dir.path(),
        "singular.json",
        r#"{"N":1,"r":1,"s":1,"kind":"constant",
            "diagonals":{"-1":[[1,0]],"0":[[0,0]],"1":[[0,0]]}}"#,
    );
    let out = bandspec(&["validate", "--operator", op.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed validation"));
}

#[test]
fn missing_file_is_an_io_error_with_exit_3() {
    let out = bandspec(&["validate", "--operator", "/nonexistent/op.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn diagnose_resolvent_point() {
    let dir = tempfile::tempdir().unwrap();
    let op = write_temp(dir.path(), "op.json", FREE_JACOBI);
    let json_path = dir.path().join("report.json");
    let out = bandspec(&[
        "diagnose",
        "--operator",
        op.to_str().unwrap(),
        "--re",
        "3",
        "--im",
        "0",
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("classification: resolvent"), "{text}");
    assert!(text.contains("q_hat = 0.38196"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["outcome"]["class"], "resolvent");
}

#[test]
fn diagnose_spectrum_point_still_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let op = write_temp(dir.path(), "op.json", FREE_JACOBI);
    let out = bandspec(&[
        "diagnose",
        "--operator",
        op.to_str().unwrap(),
        "--re",
        "1",
        "--im",
        "0",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.contains("classification: resolvent"), "{text}");
}

#[test]
fn diagnose_shallow_depth_warns() {
    let dir = tempfile::tempdir().unwrap();
    let op = write_temp(dir.path(), "op.json", FREE_JACOBI);
    let out = bandspec(&[
        "diagnose",
        "--operator",
        op.to_str().unwrap(),
        "--re",
        "3",
        "--im",
        "0",
        "--K",
        "10",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("classification: inconclusive"), "{text}");
    assert!(text.contains("warning: fit window below minimum"), "{text}");
}

#[test]
fn scan_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let op = write_temp(dir.path(), "op.json", FREE_JACOBI);
    let csv_path = dir.path().join("map.csv");
    let json_path = dir.path().join("map.json");
    let out = bandspec(&[
        "scan",
        "--operator",
        op.to_str().unwrap(),
        "--re-min",
        "2.2",
        "--re-max",
        "3.0",
        "--im-min",
        "-0.5",
        "--im-max",
        "0.5",
        "--nx",
        "3",
        "--ny",
        "2",
        "--workers",
        "2",
        "--out",
        csv_path.to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(csv.lines().skip(1).all(|l| l.contains(",resolvent,")));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);
    assert_eq!(json["spec"]["nx"], 3);
}

#[test]
fn scan_rejects_bad_rectangle_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let op = write_temp(dir.path(), "op.json", FREE_JACOBI);
    let out = bandspec(&[
        "scan",
        "--operator",
        op.to_str().unwrap(),
        "--re-min",
        "3",
        "--re-max",
        "2",
        "--im-min",
        "0",
        "--im-max",
        "0",
        "--nx",
        "1",
        "--ny",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sample_operator_files_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../operators");
    for name in ["free_jacobi.json", "block_jacobi_n2.json", "periodic_order3.json"] {
        let path = root.join(name);
        let out = bandspec(&["validate", "--operator", path.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
