use greenfl_core::dataset::{DatasetMeta, DatasetType, Dimension, Scope};
use greenfl_core::exploration::{Curve, Experiment, Metric};
use greenfl_core::reducer::{
    build_training_set, cross_validate, fit, fit_boosted, fit_lasso, fit_ridge, fit_tree, invert_curve,
    predict_volume, select_best, train_reducer, Hyperparameters, ReducerError, ReducerFeatures, RegressorKind,
    TrainOptions, TrainingRow, TreeParams, TARGETS_PER_CURVE,
};

fn features(type_tag: DatasetType, n: usize, len: usize, classes: usize, target: f64) -> ReducerFeatures {
    ReducerFeatures { type_tag, n_train_samples: n, sequence_length: len, n_classes: classes, target_accuracy: target }
}

/// Rows whose volume is an exact affine function of the feature vector.
fn realizable_rows() -> Vec<TrainingRow> {
    let mut rows = Vec::new();
    for (i, t) in DatasetType::ALL.iter().enumerate() {
        for k in 0..6 {
            let j = 6 * i + k;
            let f = features(
                *t,
                500 + (j * 379) % 1000,
                24 + (j * 53) % 200,
                2 + (j * 7) % 5,
                0.6 + 0.01 * ((j * 13) % 31) as f64,
            );
            let volume = 0.05 + 0.1 * i as f64 + 1e-4 * f.n_train_samples as f64 - 2e-4 * f.sequence_length as f64
                + 0.03 * f.n_classes as f64
                + 0.5 * f.target_accuracy;
            rows.push(TrainingRow { features: f, volume, saturated: false, group: None });
        }
    }
    rows
}

#[test]
fn realizable_linear_targets_are_fitted_exactly() {
    let rows = realizable_rows();
    let (model, scores) = fit(RegressorKind::Linear, &rows, &RegressorKind::Linear.default_grid(), 5).unwrap();
    assert_eq!(scores.len(), 1);
    assert!(model.cv_error <= 1e-6, "cv error {}", model.cv_error);
    for r in &rows {
        assert!((model.predict_raw(&r.features) - r.volume).abs() <= 1e-6);
    }
    let unseen = features(DatasetType::Ecg, 1039, 82, 2, 0.85);
    let expected = 0.05 + 0.1 * DatasetType::Ecg.index() as f64 + 0.1039 - 0.0164 + 0.06 + 0.425;
    assert!((model.predict_raw(&unseen) - expected).abs() <= 1e-6);
}

#[test]
fn selected_model_has_the_lowest_cross_validation_error() {
    let rows = realizable_rows();
    let mut models = Vec::new();
    let mut errors = Vec::new();
    for kind in RegressorKind::ALL {
        let (m, scores) = fit(kind, &rows, &kind.default_grid(), 4).unwrap();
        let grid_min = scores.iter().map(|s| s.cv_error).fold(f64::INFINITY, f64::min);
        assert_eq!(m.cv_error, grid_min, "{kind} keeps its best grid point");
        errors.extend(scores.iter().map(|s| s.cv_error));
        models.push(m);
    }
    let best = select_best(models).unwrap();
    assert!(errors.iter().all(|&e| best.cv_error <= e));
    assert_eq!(best.kind, RegressorKind::Linear);
    assert!(matches!(select_best(Vec::new()), Err(ReducerError::NoCandidates)));
}

#[test]
fn inversion_composes_with_the_curve() {
    for (a, b) in [(0.05, 0.9), (0.2, 0.75), (0.01, 0.99), (1.3, 0.2)] {
        for v in [0.05, 0.2, 0.5, 0.9, 1.0] {
            let target = a * f64::ln(v) + b;
            let (back, saturated) = invert_curve(a, b, target);
            assert!(!saturated || v == 1.0);
            assert!((back - v).abs() <= 1e-12, "a {a} b {b} v {v} -> {back}");
            assert!((a * back.ln() + b - target).abs() <= 1e-12);
        }
        assert_eq!(invert_curve(a, b, b + 0.01), (1.0, true));
    }
}

#[test]
fn ridge_and_lasso_match_one_dimensional_closed_forms() {
    // x standardised has unit variance, so the penalised slopes are
    // cov/(1 + alpha) for ridge and soft-threshold(cov, alpha) for lasso.
    let x: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 7.0, 11.0].iter().map(|v| vec![*v]).collect();
    let y = [0.3, 0.1, 0.9, 0.7, 1.4];
    let n = 5.0;
    let mx = x.iter().map(|r| r[0]).sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|r| (r[0] - mx).powi(2)).sum::<f64>() / n).sqrt();
    let cov = x.iter().zip(&y).map(|(r, t)| (r[0] - mx) / sd * (t - my)).sum::<f64>() / n;
    for alpha in [0.0, 0.1, 1.0] {
        let m = fit_ridge(&x, &y, alpha);
        assert!((m.coef[0] - cov / (1.0 + alpha)).abs() < 1e-12);
        assert!((m.intercept - my).abs() < 1e-12);
    }
    for alpha in [0.0, 0.1, 10.0] {
        let m = fit_lasso(&x, &y, alpha);
        let expected = cov.signum() * (cov.abs() - alpha).max(0.0);
        assert!((m.coef[0] - expected).abs() < 1e-9, "alpha {alpha}: {} vs {expected}", m.coef[0]);
    }
}

#[test]
fn trees_interpolate_and_boosting_reduces_error() {
    let x: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64, (i % 3) as f64]).collect();
    let y: Vec<f64> = x.iter().map(|r| (r[0] * 0.7).sin() + 0.2 * r[1]).collect();
    let full = fit_tree(&x, &y, TreeParams { max_depth: None, min_samples_leaf: 1 });
    for (r, t) in x.iter().zip(&y) {
        assert_eq!(full.predict(r), *t);
    }
    let stump = fit_tree(&x, &y, TreeParams { max_depth: Some(1), min_samples_leaf: 1 });
    assert_eq!(stump.depth(), 1);
    let sse = |f: &dyn Fn(&[f64]) -> f64| x.iter().zip(&y).map(|(r, t)| (f(r) - t).powi(2)).sum::<f64>();
    let few = fit_boosted(&x, &y, 5, 2, 0.1);
    let many = fit_boosted(&x, &y, 200, 2, 0.1);
    assert!(sse(&|r| many.predict(r)) < sse(&|r| few.predict(r)));
    assert!(sse(&|r| stump.predict(r)) > sse(&|r| full.predict(r)));
}

#[test]
fn cross_validation_and_grids_reject_bad_requests() {
    let rows = realizable_rows();
    assert!(matches!(
        cross_validate(&Hyperparameters::Linear, &rows[..3], 5),
        Err(ReducerError::InsufficientData { needed: 5, got: 3 })
    ));
    assert!(cross_validate(&Hyperparameters::Linear, &rows, 1).is_err());
    assert!(matches!(fit(RegressorKind::Ridge, &rows, &[], 5), Err(ReducerError::EmptyGrid(_))));
    assert!(matches!(
        fit(RegressorKind::Ridge, &rows, &[Hyperparameters::Linear], 5),
        Err(ReducerError::KindMismatch(_))
    ));
    let constant: Vec<TrainingRow> = rows.iter().map(|r| TrainingRow { volume: 0.4, ..r.clone() }).collect();
    let e = cross_validate(&Hyperparameters::DecisionTree { max_depth: Some(3), min_samples_leaf: 1 }, &constant, 5).unwrap();
    assert!(e.abs() < 1e-12);
}

fn volume_curve(name: &str, type_tag: DatasetType, train: usize, a: f64, b: f64, r2: f64, scope: Scope) -> Curve {
    Curve {
        experiment: Experiment { dataset_name: name.into(), scope, dimension: Dimension::Volume },
        metric: Metric::Accuracy,
        a,
        b,
        r2,
        n_points: 5,
        dataset: DatasetMeta { name: name.into(), type_tag, train_size: train, classes: 2, sequence_length: 100 },
    }
}

#[test]
fn training_rows_come_from_usable_vertical_accuracy_curves() {
    let curves = vec![
        volume_curve("a", DatasetType::Sensor, 1000, 0.05, 0.9, 0.95, Scope::Vertical),
        volume_curve("b", DatasetType::Image, 2000, 0.08, 0.8, 0.9, Scope::Vertical),
        volume_curve("low-r2", DatasetType::Image, 2000, 0.08, 0.8, 0.1, Scope::Vertical),
        volume_curve("flat", DatasetType::Image, 2000, -0.01, 0.8, 0.9, Scope::Vertical),
        volume_curve("h", DatasetType::Image, 2000, 0.08, 0.8, 0.9, Scope::Horizontal),
    ];
    let (rows, warnings) = build_training_set(&curves, 0.5);
    assert_eq!(rows.len(), 2 * TARGETS_PER_CURVE);
    assert_eq!(warnings.len(), 2);
    let first = &rows[..TARGETS_PER_CURVE];
    assert!((first[0].volume - 0.2).abs() < 1e-12, "lowest target maps to volume 0.2");
    assert!((first[TARGETS_PER_CURVE - 1].volume - 1.0).abs() < 1e-12);
    assert!(first.windows(2).all(|w| w[0].volume < w[1].volume));
    assert!(first.iter().all(|r| r.features.n_train_samples == 1000));

    assert!(rows.iter().all(|r| r.group.is_some()));
    let opts = TrainOptions { k_folds: 2, ..Default::default() };
    let (model, report) = train_reducer(&curves, &opts).unwrap();
    assert_eq!(report.n_rows, 16);
    let kinds: Vec<RegressorKind> = report.candidates.iter().map(|c| c.kind).collect();
    assert_eq!(kinds, RegressorKind::ALL.to_vec(), "each kind reported once");
    assert!(report.candidates.iter().all(|c| model.cv_error <= c.cv_error));
    assert_eq!(report.selected, model.kind);
    let v = predict_volume(&model, &features(DatasetType::Sensor, 1000, 100, 2, 0.99), 0.05);
    assert!((0.05..=1.0).contains(&v));
}

#[test]
fn constant_targets_are_predicted_by_every_kind() {
    let rows: Vec<TrainingRow> = realizable_rows().into_iter().map(|r| TrainingRow { volume: 0.4, ..r }).collect();
    for kind in RegressorKind::ALL {
        let (m, _) = fit(kind, &rows, &kind.default_grid(), 5).unwrap();
        for r in &rows {
            assert!((m.predict_raw(&r.features) - 0.4).abs() < 1e-9, "{kind}");
        }
    }
}

#[test]
fn boosting_beats_linear_on_a_step_target() {
    let rows: Vec<TrainingRow> = realizable_rows()
        .into_iter()
        .map(|r| {
            let volume = if r.features.n_train_samples > 900 { 0.9 } else { 0.2 };
            TrainingRow { volume, ..r }
        })
        .collect();
    let (lin, _) = fit(RegressorKind::Linear, &rows, &RegressorKind::Linear.default_grid(), 5).unwrap();
    let (gbm, _) = fit(RegressorKind::GradientBoosting, &rows, &RegressorKind::GradientBoosting.default_grid(), 5).unwrap();
    assert!(gbm.cv_error < lin.cv_error, "gbm {} linear {}", gbm.cv_error, lin.cv_error);
}

#[test]
fn serialized_models_predict_identically() {
    use rand::{Rng, SeedableRng};
    let curves: Vec<Curve> = (0..6)
        .map(|i| {
            volume_curve(
                &format!("d{i}"),
                DatasetType::ALL[i],
                500 + 400 * i,
                0.03 + 0.01 * i as f64,
                0.8 + 0.02 * i as f64,
                0.9,
                Scope::Vertical,
            )
        })
        .collect();
    let (model, _) = train_reducer(&curves, &TrainOptions { k_folds: 4, ..Default::default() }).unwrap();
    let back: greenfl_core::reducer::ReducerModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
    assert_eq!(back, model);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let f = features(
            DatasetType::ALL[rng.random_range(0..6)],
            rng.random_range(10..10_000),
            rng.random_range(8..2000),
            rng.random_range(2..10),
            rng.random_range(0.0..1.0),
        );
        assert_eq!(back.predict_raw(&f).to_bits(), model.predict_raw(&f).to_bits());
    }
}

#[test]
fn unbounded_tree_memorizes_a_single_curve() {
    let (a, b) = (0.07, 0.88);
    let pts: Vec<(f64, f64)> = [0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&x: &f64| (x, a * x.ln() + b)).collect();
    let fit_ = greenfl_core::exploration::fit_log_curve(&pts).unwrap();
    let c = volume_curve("one", DatasetType::Ecg, 1039, fit_.a, fit_.b, fit_.r2, Scope::Vertical);
    let (mut rows, _) = build_training_set(std::slice::from_ref(&c), 0.5);
    rows.iter_mut().for_each(|r| r.group = None);
    let h = Hyperparameters::DecisionTree { max_depth: None, min_samples_leaf: 1 };
    let (model, _) = fit(RegressorKind::DecisionTree, &rows, &[h], 2).unwrap();
    for v in [0.2, 0.35, 0.5, 0.77, 1.0] {
        let target = a * f64::ln(v) + b;
        if rows.iter().any(|r| (r.features.target_accuracy - target).abs() < 1e-12) {
            let f = features(DatasetType::Ecg, 1039, 100, 2, target);
            assert!((model.predict_raw(&f) - v).abs() <= 1e-6);
        }
    }
    for r in &rows {
        let back = model.predict_raw(&r.features);
        assert!((back - r.volume).abs() <= 1e-6);
        assert!((a * back.ln() + b - r.features.target_accuracy).abs() <= 1e-6);
    }
}

#[test]
fn boosted_predictions_rise_with_the_target_on_monotone_data() {
    let curves: Vec<Curve> = (0..4)
        .map(|i| volume_curve(&format!("m{i}"), DatasetType::Sensor, 1000 + 500 * i, 0.06, 0.9, 0.95, Scope::Vertical))
        .collect();
    let (rows, _) = build_training_set(&curves, 0.5);
    let h = Hyperparameters::GradientBoosting { n_trees: 100, max_depth: 2, shrinkage: 0.1 };
    let (model, _) = fit(RegressorKind::GradientBoosting, &rows, &[h], 4).unwrap();
    let mut last = f64::NEG_INFINITY;
    for k in 0..100 {
        let f = features(DatasetType::Sensor, 1500, 100, 2, 0.7 + 0.003 * k as f64);
        let v = model.predict_raw(&f);
        assert!(v >= last - 1e-12, "step {k}: {v} < {last}");
        last = v;
    }
    assert!(predict_volume(&model, &features(DatasetType::Sensor, 1500, 100, 2, 0.0), 0.1) >= 0.1);
}

#[test]
fn folds_keep_each_dataset_on_one_side() {
    use greenfl_core::reducer::fold_assignment;
    let row = |g: Option<&str>| TrainingRow {
        features: features(DatasetType::Sensor, 100, 10, 2, 0.8),
        volume: 0.5,
        saturated: false,
        group: g.map(String::from),
    };
    let rows = vec![row(Some("x")), row(Some("y")), row(Some("x")), row(Some("z")), row(None), row(Some("y"))];
    assert_eq!(fold_assignment(&rows, 2).unwrap(), vec![0, 1, 0, 0, 1, 1]);
    assert!(matches!(fold_assignment(&rows, 5), Err(ReducerError::InsufficientData { needed: 5, got: 4 })));
    let ungrouped: Vec<TrainingRow> = (0..4).map(|_| row(None)).collect();
    assert_eq!(fold_assignment(&ungrouped, 3).unwrap(), vec![0, 1, 2, 0]);
}
