#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use greenfl_core::reducer::{FittedParams, Hyperparameters, LinearModel, ReducerFeatures, ReducerModel, RegressorKind};

/// Small scenario with an inline roster and intensities.
pub const SCENARIO: &str = r#"{
  "name": "tiny",
  "dataset": {
    "kind": "synthetic", "name": "Tiny", "type": "Sensor",
    "train_samples": 400, "test_samples": 200, "classes": 2,
    "sequence_length": 16, "class_separation": 1.5, "seed": 9
  },
  "roster": [
    {"node_id": "a", "power_watts": 10, "location": "Clean", "data_volume": 0.3, "consistency": 0.9, "completeness": 0.9},
    {"node_id": "b", "power_watts": 200, "location": "Dirty", "data_volume": 0.3, "consistency": 1.0, "completeness": 1.0},
    {"node_id": "c", "power_watts": 50, "location": "Clean", "data_volume": 0.2, "consistency": 0.6, "completeness": 0.8},
    {"node_id": "d", "power_watts": 50, "location": "Dirty", "data_volume": 0.2, "consistency": 0.95, "completeness": 0.95}
  ],
  "carbon_intensity": {"Clean": 0.05, "Dirty": 0.6},
  "weights": {"w_energy": 0.7, "w_quality": {"consistency": 0.2, "completeness": 0.1}},
  "accuracy_threshold": 0.8,
  "accuracy_estimation": 0.75,
  "fl": {"n_rounds_max": 5, "local_epochs": 1, "batch_size": 16, "learning_rate": 0.05,
         "early_stop_patience": 3, "early_stop_min_delta": 0.001, "seed": 0,
         "val_fraction": 0.1, "hidden_dim": 8},
  "seed": 4
}"#;

/// Reducer that predicts the same volume for every dataset.
pub fn constant_model(volume: f64) -> ReducerModel {
    let d = ReducerFeatures::schema().len();
    ReducerModel {
        kind: RegressorKind::Linear,
        hyperparameters: Hyperparameters::Linear,
        params: FittedParams::Linear(LinearModel { intercept: volume, coef: vec![0.0; d], means: vec![0.0; d], scales: vec![1.0; d] }),
        cv_error: 0.0,
        feature_schema: ReducerFeatures::schema(),
    }
}

/// Writes `scenario.json` (with the given text) and `model.json` into `dir`.
pub fn setup(dir: &Path, scenario: &str) -> (PathBuf, PathBuf) {
    let scenario_path = dir.join("scenario.json");
    std::fs::write(&scenario_path, scenario).unwrap();
    let model_path = dir.join("model.json");
    std::fs::write(&model_path, serde_json::to_string_pretty(&constant_model(0.5)).unwrap()).unwrap();
    (scenario_path, model_path)
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Runs the binary with `GREENFL_DATA_DIR` set to `data_dir`.
pub fn greenfl(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greenfl"))
        .args(args)
        .env("GREENFL_DATA_DIR", data_dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}
