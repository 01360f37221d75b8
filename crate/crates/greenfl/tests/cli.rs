mod common;

use std::fs;

use serde_json::Value;

use common::{greenfl, setup, stderr, stdout, workspace_root, SCENARIO};
use greenfl_core::dataset::{DatasetMeta, DatasetType, Dimension, Scope};
use greenfl_core::exploration::{Curve, Experiment, Metric};

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn explore_requires_known_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = greenfl(dir.path(), &["explore", "--datasets", "", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("--datasets"));
    let o = greenfl(dir.path(), &["explore", "--datasets", "NoSuchSet", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown dataset"));
    let o = greenfl(dir.path(), &["explore", "--datasets", "Yoga", "--levels", "1.0", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

fn explore_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "explore", "--datasets", "ItalyPowerDemand", "--dims", "volume", "--scopes", "V", "--levels", "0,0.4,0.8",
        "--reps", "1", "--nodes", "4", "--scale", "0.2", "--out", out,
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn explore_resumes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    let o = greenfl(dir.path(), &explore_args(path(&out), &["--max-runs", "1"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let first: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((first["executed"].as_u64(), first["records"].as_u64()), (Some(1), Some(1)));

    let o = greenfl(dir.path(), &explore_args(path(&out), &[]));
    assert!(o.status.success(), "{}", stderr(&o));
    let second: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(second["executed"], 2);
    assert_eq!(second["resumed"], 1);
    assert_eq!(second["records"], 3);
    assert_eq!(second["curves"], 2);
    let records = fs::read_to_string(out.join("experiments.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 3, "no duplicated records");
    assert!(out.join("plot.csv").exists());
    let ledger = fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 3);
    assert!(ledger.lines().all(|l| l.contains("\"exploration\"")));

    // An uninterrupted run in another directory gives the same curves.
    let fresh = dir.path().join("fresh");
    let a = greenfl(dir.path(), &explore_args(path(&fresh), &[]));
    assert!(a.status.success());
    assert_eq!(fs::read(out.join("curves.jsonl")).unwrap(), fs::read(fresh.join("curves.jsonl")).unwrap());
    assert_eq!(records, fs::read_to_string(fresh.join("experiments.jsonl")).unwrap());

    let again = dir.path().join("again");
    let b = greenfl(dir.path(), &explore_args(path(&again), &[]));
    assert_eq!(a.stdout, b.stdout, "same seed, same bytes");
    let other = dir.path().join("other");
    let c = greenfl(dir.path(), &[&["--seed", "99"][..], &explore_args(path(&other), &[])].concat());
    assert!(c.status.success());
    assert_ne!(fs::read(fresh.join("curves.jsonl")).unwrap(), fs::read(other.join("curves.jsonl")).unwrap());
}

fn write_curves(dir: &std::path::Path) -> std::path::PathBuf {
    let mut text = String::new();
    for (i, t) in [DatasetType::Sensor, DatasetType::Image, DatasetType::Simulated].into_iter().enumerate() {
        let c = Curve {
            experiment: Experiment { dataset_name: format!("d{i}"), scope: Scope::Vertical, dimension: Dimension::Volume },
            metric: Metric::Accuracy,
            a: 0.03 + 0.02 * i as f64,
            b: 0.85 + 0.03 * i as f64,
            r2: 0.95,
            n_points: 5,
            dataset: DatasetMeta { name: format!("d{i}"), type_tag: t, train_size: 1000 * (i + 1), classes: 2 + i, sequence_length: 100 },
        };
        text.push_str(&serde_json::to_string(&c).unwrap());
        text.push('\n');
    }
    let p = dir.join("curves.jsonl");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn train_reducer_reports_every_kind_once() {
    let dir = tempfile::tempdir().unwrap();
    let curves = write_curves(dir.path());
    let model = dir.path().join("models/reducer.json");
    let o = greenfl(dir.path(), &["train-reducer", "--curves", path(&curves), "--out", path(&model), "--folds", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    for kind in ["Linear", "Ridge", "Lasso", "DecisionTree", "GradientBoosting"] {
        assert_eq!(table.lines().filter(|l| l.starts_with(&format!("{kind} "))).count(), 1, "{kind}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("models/reducer.report.json")).unwrap()).unwrap();
    let kinds: Vec<&str> = report["candidates"].as_array().unwrap().iter().map(|c| c["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["Linear", "Ridge", "Lasso", "DecisionTree", "GradientBoosting"]);
    let first = fs::read(&model).unwrap();
    let o = greenfl(dir.path(), &["train-reducer", "--curves", path(&curves), "--out", path(&model), "--folds", "3"]);
    assert!(o.status.success());
    assert_eq!(first, fs::read(&model).unwrap());

    let o = greenfl(dir.path(), &["train-reducer", "--curves", path(&curves), "--out", path(&model)]);
    assert_eq!(o.status.code(), Some(2), "three datasets cannot fill five folds");

    let missing = dir.path().join("nope.jsonl");
    let o = greenfl(dir.path(), &["train-reducer", "--curves", path(&missing), "--out", path(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.jsonl"));
    fs::write(dir.path().join("bad.jsonl"), "{not json}\n").unwrap();
    let o = greenfl(dir.path(), &["train-reducer", "--curves", path(&dir.path().join("bad.jsonl")), "--out", path(&model)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn recommend_table_has_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let (scenario, model) = setup(dir.path(), SCENARIO);
    let o = greenfl(dir.path(), &["recommend", "--scenario", path(&scenario), "--model", path(&model), "--table"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    for m in ["Baseline", "NS", "MSR", "SR"] {
        assert_eq!(table.lines().filter(|l| l.split_whitespace().next() == Some(m)).count(), 1, "{m}\n{table}");
    }
}

#[test]
fn recommend_json_validates_against_the_schema_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (scenario, model) = setup(dir.path(), SCENARIO);
    let args = ["recommend", "--scenario", path(&scenario), "--model", path(&model), "--json"];
    let a = greenfl(dir.path(), &args);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = greenfl(dir.path(), &args);
    assert_eq!(a.stdout, b.stdout);

    let schema: Value = serde_json::from_str(
        &fs::read_to_string(workspace_root().join("docs/schemas/recommendation.schema.json")).unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "{errors:#?}");
    assert_eq!(doc["n_hat"], 2);

    let mut broken = doc.clone();
    broken["recommendations"].as_object_mut().unwrap().remove("SR");
    assert!(!validator.is_valid(&broken));

    let out = dir.path().join("rec.json");
    let c = greenfl(dir.path(), &[&args[..], &["--out", path(&out)]].concat());
    assert_eq!(fs::read(&out).unwrap(), a.stdout);
    assert_eq!(c.stdout, a.stdout);
}

#[test]
fn bundled_scenarios_validate_against_the_scenario_schema() {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(workspace_root().join("docs/schemas/scenario.schema.json")).unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for name in ["config1.json", "config2.json", "config3.json"] {
        let doc: Value = serde_json::from_str(&fs::read_to_string(workspace_root().join("scenarios").join(name)).unwrap()).unwrap();
        assert!(validator.is_valid(&doc), "{name}");
    }
    let tiny: Value = serde_json::from_str(SCENARIO).unwrap();
    assert!(validator.is_valid(&tiny));
}

#[test]
fn user_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_weights = SCENARIO.replace("\"completeness\": 0.1}", "\"completeness\": 0.3}");
    let (scenario, model) = setup(dir.path(), &bad_weights);
    let o = greenfl(dir.path(), &["recommend", "--scenario", path(&scenario), "--model", path(&model), "--table"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("weights sum to"), "{}", stderr(&o));

    let (scenario, _) = setup(dir.path(), SCENARIO);
    let missing_model = dir.path().join("none.json");
    let o = greenfl(dir.path(), &["recommend", "--scenario", path(&scenario), "--model", path(&missing_model)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = greenfl(dir.path(), &["recommend", "--scenario", path(&dir.path().join("none.json")), "--model", path(&model)]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&scenario, "{").unwrap();
    let o = greenfl(dir.path(), &["recommend", "--scenario", path(&scenario), "--model", path(&model)]);
    assert_eq!(o.status.code(), Some(2));
    let (scenario, model) = setup(dir.path(), SCENARIO);
    let o = greenfl(dir.path(), &["validate", "--scenario", path(&scenario), "--model", path(&model), "--reps", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = greenfl(dir.path(), &["validate", "--scenario", path(&scenario), "--model", path(&model), "--methods", "XY"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_runs_eight_reps_of_four_methods_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let (scenario, model) = setup(dir.path(), SCENARIO);
    let args = ["validate", "--scenario", path(&scenario), "--model", path(&model), "--reps", "8", "--json"];
    let a = greenfl(dir.path(), &args);
    assert!(a.status.success(), "{}", stderr(&a));
    let report: Value = serde_json::from_slice(&a.stdout).unwrap();
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 32);
    for m in ["Baseline", "NS", "MSR", "SR"] {
        assert_eq!(runs.iter().filter(|r| r["method"] == m).count(), 8, "{m}");
    }
    let ledger = fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 32);
    let ledger_kg: f64 = ledger.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["total_kg"].as_f64().unwrap()).sum();
    let runs_kg: f64 = runs.iter().map(|r| r["total_kg"].as_f64().unwrap()).sum();
    assert!((ledger_kg - runs_kg).abs() <= 1e-12 * runs_kg);

    let b = greenfl(dir.path(), &args);
    assert_eq!(a.stdout, b.stdout, "bit-reproducible under the same seed");

    let o = greenfl(dir.path(), &["validate", "--scenario", path(&scenario), "--model", path(&model), "--reps", "2", "--methods", "NS", "--table"]);
    assert!(o.status.success());
    let table = stdout(&o);
    assert!(table.lines().any(|l| l.starts_with("Baseline ")), "Baseline always runs\n{table}");
    assert!(table.lines().any(|l| l.starts_with("NS ")));
    assert!(!table.lines().any(|l| l.starts_with("SR ")));
}

#[test]
fn the_global_seed_overrides_the_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (scenario, model) = setup(dir.path(), SCENARIO);
    let base = ["validate", "--scenario", path(&scenario), "--model", path(&model), "--reps", "1", "--methods", "NS", "--json"];
    let a = greenfl(dir.path(), &base);
    let b = greenfl(dir.path(), &[&["--seed", "4"][..], &base].concat());
    let c = greenfl(dir.path(), &[&["--seed", "5"][..], &base].concat());
    assert_eq!(a.stdout, b.stdout, "scenario seed is 4");
    assert_ne!(a.stdout, c.stdout);
}
