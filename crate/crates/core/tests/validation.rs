use greenfl_core::recommender::Method;
use greenfl_core::reducer::{FittedParams, Hyperparameters, LinearModel, ReducerFeatures, ReducerModel, RegressorKind};
use greenfl_core::scenario::ScenarioConfig;
use greenfl_core::telemetry::EmissionsLedger;
use greenfl_core::validation::{estimate_accuracy, validate};

const SCENARIO: &str = r#"{
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
  "accuracy_threshold": 0.8,
  "accuracy_estimation": 0.75,
  "fl": {"n_rounds_max": 5, "local_epochs": 1, "batch_size": 16, "learning_rate": 0.05,
         "early_stop_patience": 3, "early_stop_min_delta": 0.001, "seed": 0,
         "val_fraction": 0.1, "hidden_dim": 8},
  "seed": 4
}"#;

fn half_volume_model() -> ReducerModel {
    let d = ReducerFeatures::schema().len();
    ReducerModel {
        kind: RegressorKind::Linear,
        hyperparameters: Hyperparameters::Linear,
        params: FittedParams::Linear(LinearModel { intercept: 0.5, coef: vec![0.0; d], means: vec![0.0; d], scales: vec![1.0; d] }),
        cv_error: 0.0,
        feature_schema: ReducerFeatures::schema(),
    }
}

#[test]
fn validation_runs_every_method_and_charges_the_ledger() {
    let config = ScenarioConfig::from_json(SCENARIO).unwrap();
    config.validate().unwrap();
    let m = config.materialize().unwrap();
    assert_eq!(m.roster.len(), 4);
    assert_eq!(m.partition.n_nodes(), 4);

    let dir = tempfile::tempdir().unwrap();
    let ledger = EmissionsLedger::open(dir.path().join("ledger.jsonl")).unwrap();
    let report = validate(&m, &half_volume_model(), &[Method::Ns, Method::Msr, Method::Sr], 2, Some(&ledger)).unwrap();
    assert_eq!(report.runs.len(), 8);
    assert_eq!(report.methods, Method::ALL.to_vec());
    assert_eq!(report.recommendation.n_hat, 2);
    for (i, run) in report.runs.iter().enumerate() {
        assert_eq!(run.method, Method::ALL[i / 2]);
        assert_eq!(run.rep, i % 2);
        assert_eq!(run.meets_threshold, run.accuracy >= 0.8);
        let rec = &report.recommendation.recommendations[&run.method];
        assert_eq!(run.nodes, rec.node_ids());
    }
    // Repetitions of different methods share seeds.
    assert_eq!(report.runs[0].seed, report.runs[2].seed);
    assert_ne!(report.runs[0].seed, report.runs[1].seed);

    let summary = ledger.summary().unwrap();
    assert_eq!(summary.entries, 8);
    let kg: f64 = report.runs.iter().map(|r| r.total_kg).sum();
    assert!((summary.total_kg - kg).abs() <= 1e-12 * kg);
    assert!((report.total_kg - kg).abs() <= 1e-12 * kg);
    let base = &report.summary[0];
    assert_eq!(base.method, Method::Baseline);
    assert_eq!(base.runs, 2);
    let ns = &report.summary[1];
    assert!(ns.mean_kwh < base.mean_kwh, "two nodes at half volume cost less than all four");

    let again = validate(&m, &half_volume_model(), &[Method::Ns, Method::Msr, Method::Sr], 2, None).unwrap();
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&report).unwrap());

    let only_baseline = validate(&m, &half_volume_model(), &[], 1, None).unwrap();
    assert_eq!(only_baseline.runs.len(), 1);
    assert_eq!(only_baseline.runs[0], report.runs[0]);
}

#[test]
fn estimation_is_charged_separately() {
    let m = ScenarioConfig::from_json(SCENARIO).unwrap().materialize().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ledger = EmissionsLedger::open(dir.path().join("ledger.jsonl")).unwrap();
    let est = estimate_accuracy(&m, Some(&ledger)).unwrap();
    assert!((0.0..=1.0).contains(&est.accuracy));
    let summary = ledger.summary().unwrap();
    assert_eq!(summary.entries, 1);
    assert!(summary.by_purpose.contains_key("estimation"));
}

#[test]
fn scenarios_reject_inconsistent_documents() {
    let bad_threshold = SCENARIO.replace("\"accuracy_threshold\": 0.8", "\"accuracy_threshold\": 1.5");
    assert!(ScenarioConfig::from_json(&bad_threshold).unwrap().validate().is_err());
    let unknown_field = SCENARIO.replace("\"seed\": 4", "\"seed\": 4, \"extra\": 1");
    assert!(ScenarioConfig::from_json(&unknown_field).is_err());
    let too_much = SCENARIO.replace("\"data_volume\": 0.3, \"consistency\": 0.9", "\"data_volume\": 0.6, \"consistency\": 0.9");
    assert!(ScenarioConfig::from_json(&too_much).unwrap().validate().is_err());
    let unknown_location = SCENARIO.replace("\"Clean\": 0.05, ", "");
    let cfg = ScenarioConfig::from_json(&unknown_location).unwrap();
    assert!(cfg.validate().is_err() || cfg.materialize().is_err());
}
