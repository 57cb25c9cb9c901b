use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthex-forge")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const CONFIG: &str = r#"{
  "task": "hip",
  "volumes": [
    {"id": "a", "subject_id": "s1", "phantom": {"kind": "hip", "voxels": 24, "spacing_mm": 10.0}},
    {"id": "b", "subject_id": "s2", "phantom": {"kind": "hip", "voxels": 24, "spacing_mm": 10.0, "scale": 1.1}}
  ],
  "simulator": {"kind": "naive"},
  "resolution": 32,
  "n_train": 4,
  "n_val": 2,
  "seed": 3
}"#;

fn generate(dir: &Path) -> String {
    let cfg = dir.join("config.json");
    fs::write(&cfg, CONFIG).unwrap();
    let out = dir.join("data");
    let o = forge(&["generate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.json").to_str().unwrap().to_string()
}

#[test]
fn full_pipeline_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    assert_eq!(code(&forge(&["validate", "--manifest", &manifest])), 0);

    let aug = dir.path().join("aug");
    let o = forge(&["augment", "--manifest", &manifest, "--level", "regular", "--out", aug.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(aug.join("plans.jsonl").is_file());

    let folds = dir.path().join("folds.json");
    let o = forge(&["split", "--manifest", &manifest, "--mode", "loso", "--out", folds.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let spec: serde_json::Value = serde_json::from_str(&fs::read_to_string(&folds).unwrap()).unwrap();
    assert_eq!(spec["folds"].as_array().unwrap().len(), 2);

    let pred = dir.path().join("pred");
    let eval = dir.path().join("eval");
    fs::create_dir(&pred).unwrap();
    let o = forge(&["evaluate", "--pred", pred.to_str().unwrap(), "--gt", &manifest, "--out", eval.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(eval.join("metrics.json").is_file());
}

#[test]
fn broken_dataset_fails_validation_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let sample = fs::read_dir(dir.path().join("data/samples")).unwrap().next().unwrap().unwrap().path();
    fs::remove_file(sample).unwrap();
    let o = forge(&["validate", "--manifest", &manifest]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("MissingFile"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"task": "hip", "volumes": [], "simulator": {"kind": "naive"}, "n_train": 1}"#).unwrap();
    let o = forge(&["generate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    fs::write(&cfg, "{ not json").unwrap();
    let o = forge(&["generate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    fs::write(&cfg, r#"{"task": "knee", "volumes": [], "simulator": {"kind": "naive"}, "n_train": 1}"#).unwrap();
    assert_eq!(code(&forge(&["generate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 2);
}

#[test]
fn impossible_split_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(dir.path());
    let o = forge(&["split", "--manifest", &manifest, "--mode", "kfold", "--k", "5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_arguments_exit_two() {
    assert_eq!(code(&forge(&["generate"])), 2);
    assert_eq!(code(&forge(&["frobnicate"])), 2);
}

#[test]
fn missing_manifest_exits_one() {
    let o = forge(&["validate", "--manifest", "/nonexistent/manifest.json"]);
    assert_eq!(code(&o), 1);
}
