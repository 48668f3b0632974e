use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use toothseg_core::volume::load_labels;
use toothseg_core::weaklabels::parse_annotations;

fn toothseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toothseg")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = toothseg(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn phantom(dir: &Path, name: &str, teeth: &str, seed: &str) {
    ok(dir, &["phantom", "--teeth", teeth, "--shape", "80", "96", "96", "--out", name, "--seed", seed]);
}

#[test]
fn unknown_subcommand_and_flag_fail_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["segment"][..], &["phantom", "--out", "x", "--colour", "red"][..]] {
        let out = toothseg(dir.path(), args);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    }
}

#[test]
fn oracle_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "study", "8", "1");
    ok(d, &[
        "pipeline", "--in", "study/image.vjson", "--coarse", "oracle", "--fine", "oracle", "--gt",
        "study/labels.vjson", "--out", "pred",
    ]);
    let out = ok(d, &["evaluate", "--pred", "pred/labels.vjson", "--gt", "study/labels.vjson"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["aggregate"]["iou"], 1.0);
    assert_eq!(report["aggregate"]["asd_mm"], 0.0);
    assert!(d.join("pred/manifest.json").exists());
}

#[test]
fn stages_compose_to_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "study", "6", "2");
    ok(d, &["--jobs", "3", "pipeline", "--in", "study/image.vjson", "--coarse", "classical", "--fine", "threshold", "--out", "whole"]);
    ok(d, &["preprocess", "--in", "study/image.vjson", "--out", "pre"]);
    ok(d, &["coarse", "--in", "pre/coarse.vjson", "--coarse", "classical", "--out", "co"]);
    ok(d, &["roi", "--coarse-labels", "co/coarse_labels.vjson", "--image", "pre/normalized.vjson", "--out", "crops"]);
    ok(d, &["--jobs", "2", "fine", "--crops", "crops", "--fine", "threshold", "--out", "fine"]);
    assert_eq!(fs::read(d.join("whole/coarse_labels.raw")).unwrap(), fs::read(d.join("co/coarse_labels.raw")).unwrap());
    assert_eq!(fs::read(d.join("whole/labels.raw")).unwrap(), fs::read(d.join("fine/labels.raw")).unwrap());
}

#[test]
fn weak2mask_labels_are_annotated_teeth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "study", "5", "3");
    ok(d, &["weak2mask", "--in", "study/image.vjson", "--ann", "study/ann.json", "--k", "-100", "--tau", "300", "--out", "weak"]);
    let labels = load_labels(d.join("weak/labels.vjson")).unwrap();
    let annotated: BTreeSet<u8> = parse_annotations(d.join("study/ann.json")).unwrap().teeth();
    assert!(!labels.teeth().is_empty());
    assert!(labels.teeth().is_subset(&annotated));
}

#[test]
fn evaluate_rejects_mismatched_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "a", "2", "1");
    ok(d, &["phantom", "--teeth", "2", "--shape", "80", "96", "100", "--out", "b"]);
    let out = toothseg(d, &["evaluate", "--pred", "a/labels.vjson", "--gt", "b/labels.vjson"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("geometry"), "{err}");
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = toothseg(dir.path(), &["preprocess", "--in", "nowhere/image.vjson", "--out", "pre"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/image.vjson"));
}

#[test]
fn oracle_needs_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "study", "2", "1");
    let out = toothseg(d, &["pipeline", "--in", "study/image.vjson", "--coarse", "oracle", "--out", "p"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--gt"));
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "5", "phantom", "--teeth", "3", "--shape", "80", "96", "96", "--noise", "20", "--out", "study"]);
    ok(d, &["--seed", "9", "preprocess", "--in", "study/image.vjson", "--crop", "16", "32", "32", "--out", "pre"]);
    for (run, files) in [
        ("study", &["image.raw", "labels.raw", "ann.json", "phantom.json"][..]),
        ("pre", &["normalized.raw", "coarse.raw", "crop.raw"][..]),
    ] {
        let again = format!("{run}_again");
        ok(d, &["replay", "--manifest", &format!("{run}/manifest.json"), "--out", &again]);
        for f in files {
            assert_eq!(fs::read(d.join(run).join(f)).unwrap(), fs::read(d.join(&again).join(f)).unwrap(), "{run}/{f}");
        }
        let m: Value = serde_json::from_str(&fs::read_to_string(d.join(run).join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["tool"], "toothseg");
        assert!(m["config"].is_object());
    }
}

#[test]
fn phantom_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "study", "2", "4");
    ok(d, &["--seed", "4", "phantom", "--config", "study/phantom.json", "--out", "copy"]);
    assert_eq!(fs::read(d.join("study/image.raw")).unwrap(), fs::read(d.join("copy/image.raw")).unwrap());
}
