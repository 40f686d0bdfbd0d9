use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "synth": {"seed": 5, "single_patients": 150, "multi_patients": 90, "chapters": 3, "categories_per_chapter": 3, "clusters": 6},
  "split": {"train": 50, "valid": 10, "test": 30},
  "hyperbolic": {"dim": 6, "epochs": 10},
  "encoder": {"embed": 6, "hidden": 5, "patient": 4, "code_attention": 4, "admission_attention": 3, "layers": 1},
  "ssl": {"epochs": 2},
  "finetune": {"epochs": 2},
  "eval": {"trace_patients": 2}
}"#;

fn sherbet(dir: &Path, args: &[&str]) -> (Output, Value) {
    let config = dir.join("tiny.json");
    if !config.exists() {
        fs::write(&config, TINY).unwrap();
    }
    let out = Command::new(env!("CARGO_BIN_EXE_sherbet"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("run"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    let json = serde_json::from_str(stdout.lines().last().unwrap_or("null")).unwrap();
    (out, json)
}

#[test]
fn pipeline_prints_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (out, json) = sherbet(dir.path(), &["pipeline", "--seed", "2", "--threads", "1"]);
    assert!(out.status.success(), "{json}");
    assert_eq!(json["status"], "ok");
    assert_eq!(json["stage"], "pipeline");
    assert!(json["metrics"]["r_at"]["10"].as_f64().is_some(), "{json}");
    assert!(dir.path().join("run/manifest.json").is_file());
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["gen-synth", "embed-hier", "build-graph", "pretrain-ssl", "finetune", "evaluate", "explain"] {
        let (out, json) = sherbet(dir.path(), &[stage, "--task", "hf", "--no-hierarchy"]);
        assert!(out.status.success(), "{stage}: {json}");
        assert_eq!(json["stage"], stage);
    }
    let metrics: Value = serde_json::from_slice(&fs::read(dir.path().join("run/metrics.json")).unwrap()).unwrap();
    assert!(metrics["auc"].as_f64().is_some(), "{metrics}");
}

#[test]
fn missing_artifact_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let (out, json) = sherbet(dir.path(), &["finetune"]);
    assert!(!out.status.success());
    assert_eq!(json["status"], "error");
    assert_eq!(json["error"], "MissingArtifact");
    assert_eq!(json["command"], "finetune");
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"seed": 1, "learning_rate": 3}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sherbet"))
        .args(["gen-synth", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["error"], "ConfigError", "{json}");
}
