use std::path::Path;
use std::process::{Command, Output};

use gme_detect::format::{read_checkpoint, read_dataset};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gme-detect")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&["--version"]).status.code(), Some(0));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(bin(&["gen", "--kind", "ghz"]).status.code(), Some(1));
    assert_eq!(bin(&["gen", "--kind", "mixed", "--qubits", "3", "--out", "x"]).status.code(), Some(1));
}

#[test]
fn capacity_and_impossible_noise_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.gmed");
    let r = bin(&["gen", "--kind", "dense", "--qubits", "5", "--per-label", "2", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let r = bin(&["gen", "--kind", "ghz", "--qubits", "3", "--noise", "0.4", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn missing_or_corrupt_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.gmed");
    std::fs::write(&junk, b"GMED not really").unwrap();
    let out = dir.path().join("m.gmem");
    assert_eq!(bin(&["train", "--data", s(&junk), "--out", s(&out)]).status.code(), Some(2));
    let missing = dir.path().join("absent.gmed");
    assert_eq!(bin(&["train", "--data", s(&missing), "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn gen_train_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmed");
    let model = dir.path().join("m.gmem");
    let ev = dir.path().join("ev");
    let r = bin(&["gen", "--kind", "ghz", "--qubits", "4", "--per-label", "40", "--seed", "2", "--out", s(&data)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let ds = read_dataset(&std::fs::read(&data).unwrap()[..]).unwrap();
    assert_eq!((ds.len(), ds.feature_length), (80, 16));
    assert!(dir.path().join("d.gmed.manifest.json").exists());

    let r = bin(&["train", "--data", s(&data), "--out", s(&model), "--epochs", "4"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let ck = read_checkpoint(&std::fs::read(&model).unwrap()[..]).unwrap();
    assert!(ck.provenance.is_some() && ck.adam.is_some());
    let history = std::fs::read_to_string(dir.path().join("m.gmem.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 5);

    let r = bin(&["eval", "--checkpoint", s(&model), "--data", s(&data), "--out", s(&ev)]);
    assert!(r.status.success());
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("ev.json")).unwrap()).unwrap();
    // 30% of 80 held out
    assert_eq!(json["total"], 24);
    let csv = std::fs::read_to_string(dir.path().join("ev.csv")).unwrap();
    assert!(csv.starts_with("qubits,arm,accuracy_pct,fn,fp\n4,CNN,"));

    let r = bin(&["eval", "--checkpoint", s(&model), "--data", s(&data), "--out", s(&ev), "--split", "all"]);
    assert_eq!(r.status.code(), Some(1));
    let r = bin(&["eval", "--checkpoint", s(&model), "--data", s(&data), "--out", s(&ev), "--split", "all", "--allow-train-eval"]);
    assert!(r.status.success());
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("ev.json")).unwrap()).unwrap();
    assert_eq!(json["total"], 80);
}

#[test]
fn eval_rejects_mismatched_qubits() {
    let dir = tempfile::tempdir().unwrap();
    let d4 = dir.path().join("d4.gmed");
    let d3 = dir.path().join("d3.gmed");
    let model = dir.path().join("m.gmem");
    assert!(bin(&["gen", "--kind", "ghz", "--qubits", "4", "--per-label", "10", "--out", s(&d4)]).status.success());
    assert!(bin(&["gen", "--kind", "ghz", "--qubits", "3", "--per-label", "10", "--out", s(&d3)]).status.success());
    assert!(bin(&["train", "--data", s(&d4), "--out", s(&model), "--epochs", "1"]).status.success());
    let r = bin(&["eval", "--checkpoint", s(&model), "--data", s(&d3), "--out", s(&dir.path().join("e"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn sdp_label_cross_check_agrees_with_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmed");
    let out = dir.path().join("s.jsonl");
    assert!(bin(&["gen", "--kind", "ghz", "--qubits", "3", "--per-label", "5", "--out", s(&data)]).status.success());
    let r = bin(&["sdp-label", "--data", s(&data), "--out", s(&out), "--cross-check"]);
    assert!(r.status.success());
    let lines = std::fs::read_to_string(&out).unwrap();
    assert_eq!(lines.lines().count(), 10);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("s.jsonl.summary.json")).unwrap()).unwrap();
    assert!(summary["max_abs_delta"].as_f64().unwrap() <= 1e-5);
    assert_eq!(summary["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn noise_reports_degenerate_points_and_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nz");
    let r = bin(&[
        "noise", "--qubits", "3", "--p-grid", "0.2,0.8", "--per-label", "10", "--repeats", "2", "--epochs", "1",
        "--boundary-check", "--out", s(&out),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("degenerate"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("nz.json")).unwrap()).unwrap();
    assert_eq!(json["points"][0]["degenerate"], true);
    assert_eq!(json["points"][1]["degenerate"], false);
    assert_eq!(json["boundary"].as_array().unwrap().len(), 6);
    let csv = std::fs::read_to_string(dir.path().join("nz.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn replay_detects_tampered_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmed");
    assert!(bin(&["gen", "--kind", "ghz", "--qubits", "3", "--per-label", "5", "--out", s(&data)]).status.success());
    let manifest = dir.path().join("d.gmed.manifest.json");
    assert!(bin(&["replay", "--manifest", s(&manifest)]).status.success());
    let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    m["outputs"][0]["sha256"] = "00".repeat(32).into();
    let forged = dir.path().join("forged.json");
    std::fs::write(&forged, serde_json::to_vec(&m).unwrap()).unwrap();
    let replayed = dir.path().join("rep");
    assert_eq!(bin(&["replay", "--manifest", s(&forged), "--out-dir", s(&replayed)]).status.code(), Some(2));
}
