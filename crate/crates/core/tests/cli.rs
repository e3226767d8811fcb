use std::path::Path;
use std::process::{Command, Output};

fn pocketseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pocketseg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) {
    std::fs::write(dir.join("c.json"), body).unwrap();
}

const SMALL: &str = r#"{
  "manifest": "data/manifest.json",
  "output_dir": "runs",
  "family": "BM",
  "subsets": [["T1C"]],
  "channels": 2,
  "depth": 1,
  "patch_size": 16,
  "patches_per_image": 2,
  "inference_patch_size": 64,
  "folds": 2,
  "optimizer": {"epochs": 1, "batch_size": 4},
  "cohort": {"n_studies": 6, "n_patients": 6}
}"#;

#[test]
fn unknown_subcommand_prints_usage_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = pocketseg(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(pocketseg(dir.path(), &[]).status.code(), Some(1));
}

#[test]
fn malformed_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "{\"channels\": ");
    let out = pocketseg(dir.path(), &["split", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));

    write_config(dir.path(), "{\"chanels\": 4}");
    assert_eq!(pocketseg(dir.path(), &["split", "--config", "c.json"]).status.code(), Some(1));
    write_config(dir.path(), "{\"folds\": 1}");
    assert_eq!(pocketseg(dir.path(), &["split", "--config", "c.json"]).status.code(), Some(1));
    assert_eq!(pocketseg(dir.path(), &["split", "--preset", "huge"]).status.code(), Some(1));
}

#[test]
fn split_writes_identical_fold_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, SMALL);
    assert!(pocketseg(d, &["generate-phantoms", "--config", "c.json"]).status.success());
    assert!(d.join("data/manifest.json").exists());
    let out = pocketseg(d, &["split", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(d.join("runs/folds.json")).unwrap();
    assert!(pocketseg(d, &["split", "--config", "c.json"]).status.success());
    assert_eq!(first, std::fs::read(d.join("runs/folds.json")).unwrap());
    assert!(pocketseg(d, &["split", "--config", "c.json", "--seed", "3", "--out", "other"]).status.success());
    assert_ne!(first, std::fs::read(d.join("other/folds.json")).unwrap());
}

#[test]
fn train_then_evaluate_one_fold() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, SMALL);
    assert!(pocketseg(d, &["generate-phantoms", "--config", "c.json"]).status.success());
    let out = pocketseg(d, &["train", "--config", "c.json", "--fold", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let fold = d.join("runs/BM_T1C/fold_1");
    assert!(fold.join("best.ckpt").exists());
    assert!(fold.join("train_log.csv").exists());
    assert!(!d.join("runs/BM_T1C/fold_0").exists());
    let out = pocketseg(d, &["evaluate", "--config", "c.json", "--fold", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(fold.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("study_id,model,dice,hd95_mm,fpe,fne"));
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn diverging_training_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, &SMALL.replace("\"epochs\": 1", "\"epochs\": 3, \"learning_rate\": 1e30"));
    assert!(pocketseg(d, &["generate-phantoms", "--config", "c.json"]).status.success());
    let out = pocketseg(d, &["train", "--config", "c.json", "--fold", "0"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite loss"));
}

#[test]
fn evaluate_without_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d, SMALL);
    assert!(pocketseg(d, &["generate-phantoms", "--config", "c.json"]).status.success());
    let out = pocketseg(d, &["evaluate", "--config", "c.json", "--fold", "0"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best.ckpt"));
}

#[test]
fn gradcheck_reports_each_op() {
    let dir = tempfile::tempdir().unwrap();
    let out = pocketseg(dir.path(), &["gradcheck", "--seeds", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    for op in ["conv3d", "conv_transpose3d", "batchnorm3d", "relu", "downsample", "dice_ce_loss", "pocket_unet", "double_unet"] {
        assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains(&format!(" {op}:"))), "{op}\n{text}");
    }
}
