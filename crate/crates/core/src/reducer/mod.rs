//! Volume reducer: learns, from exploration curves, how much of a dataset is
//! needed to reach a target accuracy, so unseen datasets can be trained on
//! fewer nodes.

mod linear;
mod tree;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetMeta, DatasetType, Dimension, Scope};
use crate::exploration::{Curve, Metric};

pub use linear::{fit_lasso, fit_ols, fit_ridge, LinearModel};
pub use tree::{fit_boosted, fit_tree, BoostedTrees, Node, RegressionTree, TreeParams};

#[derive(Debug, Error)]
pub enum ReducerError {
    #[error("need at least {needed} rows for {needed}-fold cross-validation, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("empty hyperparameter grid for {0}")]
    EmptyGrid(RegressorKind),
    #[error("hyperparameters {0:?} do not belong to the requested model kind")]
    KindMismatch(Hyperparameters),
    #[error("invalid features: {0}")]
    InvalidFeatures(String),
    #[error("no candidate models")]
    NoCandidates,
}

pub type Result<T, E = ReducerError> = std::result::Result<T, E>;

/// Model families, simplest first; the order breaks cross-validation ties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegressorKind {
    Linear,
    Ridge,
    Lasso,
    DecisionTree,
    GradientBoosting,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 5] = [
        RegressorKind::Linear,
        RegressorKind::Ridge,
        RegressorKind::Lasso,
        RegressorKind::DecisionTree,
        RegressorKind::GradientBoosting,
    ];

    /// Hyperparameter grid searched by default.
    pub fn default_grid(self) -> Vec<Hyperparameters> {
        match self {
            RegressorKind::Linear => vec![Hyperparameters::Linear],
            RegressorKind::Ridge => [1e-3, 1e-2, 0.1, 1.0].into_iter().map(|alpha| Hyperparameters::Ridge { alpha }).collect(),
            RegressorKind::Lasso => [1e-4, 1e-3, 1e-2, 0.1].into_iter().map(|alpha| Hyperparameters::Lasso { alpha }).collect(),
            RegressorKind::DecisionTree => [Some(2), Some(4), Some(6), None]
                .into_iter()
                .map(|max_depth| Hyperparameters::DecisionTree { max_depth, min_samples_leaf: 1 })
                .collect(),
            RegressorKind::GradientBoosting => {
                let mut grid = Vec::new();
                for n_trees in [50, 200] {
                    for max_depth in [2, 3] {
                        for shrinkage in [0.05, 0.1] {
                            grid.push(Hyperparameters::GradientBoosting { n_trees, max_depth, shrinkage });
                        }
                    }
                }
                grid
            }
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for RegressorKind {
    type Err = ReducerError;

    fn from_str(s: &str) -> Result<Self> {
        RegressorKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ReducerError::InvalidFeatures(format!("unknown model kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Hyperparameters {
    Linear,
    Ridge { alpha: f64 },
    Lasso { alpha: f64 },
    DecisionTree { max_depth: Option<usize>, min_samples_leaf: usize },
    GradientBoosting { n_trees: usize, max_depth: usize, shrinkage: f64 },
}

impl Hyperparameters {
    pub fn kind(&self) -> RegressorKind {
        match self {
            Hyperparameters::Linear => RegressorKind::Linear,
            Hyperparameters::Ridge { .. } => RegressorKind::Ridge,
            Hyperparameters::Lasso { .. } => RegressorKind::Lasso,
            Hyperparameters::DecisionTree { .. } => RegressorKind::DecisionTree,
            Hyperparameters::GradientBoosting { .. } => RegressorKind::GradientBoosting,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FittedParams {
    Linear(LinearModel),
    Tree(RegressionTree),
    Boosted(BoostedTrees),
}

impl FittedParams {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            FittedParams::Linear(m) => m.predict(x),
            FittedParams::Tree(t) => t.predict(x),
            FittedParams::Boosted(b) => b.predict(x),
        }
    }
}

fn train(h: &Hyperparameters, x: &[Vec<f64>], y: &[f64]) -> FittedParams {
    match *h {
        Hyperparameters::Linear => FittedParams::Linear(fit_ols(x, y)),
        Hyperparameters::Ridge { alpha } => FittedParams::Linear(fit_ridge(x, y, alpha)),
        Hyperparameters::Lasso { alpha } => FittedParams::Linear(fit_lasso(x, y, alpha)),
        Hyperparameters::DecisionTree { max_depth, min_samples_leaf } => {
            FittedParams::Tree(fit_tree(x, y, TreeParams { max_depth, min_samples_leaf }))
        }
        Hyperparameters::GradientBoosting { n_trees, max_depth, shrinkage } => {
            FittedParams::Boosted(fit_boosted(x, y, n_trees, max_depth, shrinkage))
        }
    }
}

/// Inputs describing a dataset and the accuracy wanted from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducerFeatures {
    pub type_tag: DatasetType,
    pub n_train_samples: usize,
    pub sequence_length: usize,
    pub n_classes: usize,
    pub target_accuracy: f64,
}

impl ReducerFeatures {
    pub fn from_meta(meta: &DatasetMeta, target_accuracy: f64) -> Self {
        ReducerFeatures {
            type_tag: meta.type_tag,
            n_train_samples: meta.train_size,
            sequence_length: meta.sequence_length,
            n_classes: meta.classes,
            target_accuracy,
        }
    }

    pub fn schema() -> Vec<String> {
        DatasetType::ALL
            .iter()
            .map(|t| format!("type={t}"))
            .chain(["n_train_samples", "sequence_length", "n_classes", "target_accuracy"].map(String::from))
            .collect()
    }

    /// One-hot type followed by the numeric fields, in [`Self::schema`] order.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; DatasetType::ALL.len()];
        v[self.type_tag.index()] = 1.0;
        v.extend([
            self.n_train_samples as f64,
            self.sequence_length as f64,
            self.n_classes as f64,
            self.target_accuracy,
        ]);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub features: ReducerFeatures,
    pub volume: f64,
    /// The target lies above what the curve reaches with all data.
    pub saturated: bool,
    /// Source dataset. Rows sharing a group are held out together during
    /// cross-validation; rows without one form singleton groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// Volume needed to reach `target` on `acc = a·ln(v) + b`, clamped to
/// (0, 1]; the flag reports clamping at 1.
pub fn invert_curve(a: f64, b: f64, target: f64) -> (f64, bool) {
    let v = ((target - b) / a).exp();
    if v > 1.0 {
        (1.0, true)
    } else {
        (v.max(f64::MIN_POSITIVE), false)
    }
}

pub const TARGETS_PER_CURVE: usize = 8;

/// Turns vertical volume accuracy curves into training rows: per curve,
/// evenly spaced targets between the accuracy at volume 0.2 and at full
/// volume, each paired with the inverted volume. Curves with poor fit or
/// non-increasing accuracy are skipped with a warning.
pub fn build_training_set(curves: &[Curve], min_r2: f64) -> (Vec<TrainingRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for c in curves.iter().filter(|c| {
        c.metric == Metric::Accuracy
            && c.experiment.scope == Scope::Vertical
            && c.experiment.dimension == Dimension::Volume
    }) {
        if !(c.r2 >= min_r2) {
            warnings.push(format!("{}: r2 {:.3} below {min_r2}, skipped", c.experiment, c.r2));
            continue;
        }
        if !(c.a > 0.0) {
            warnings.push(format!("{}: accuracy does not grow with volume (a = {:.4}), skipped", c.experiment, c.a));
            continue;
        }
        let lo = c.eval(0.2);
        let hi = c.eval(1.0);
        for k in 0..TARGETS_PER_CURVE {
            let target = lo + (hi - lo) * k as f64 / (TARGETS_PER_CURVE - 1) as f64;
            let (volume, saturated) = invert_curve(c.a, c.b, target);
            rows.push(TrainingRow {
                features: ReducerFeatures::from_meta(&c.dataset, target),
                volume,
                saturated,
                group: Some(c.experiment.dataset_name.clone()),
            });
        }
    }
    (rows, warnings)
}

/// Fold of every row: groups are numbered in order of first appearance and
/// group `g` is held out in fold `g % k`, so a dataset never appears on both
/// sides of a split. Fails when there are fewer groups than folds.
pub fn fold_assignment(rows: &[TrainingRow], k: usize) -> Result<Vec<usize>> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut n_groups = 0;
    let folds: Vec<usize> = rows
        .iter()
        .map(|r| {
            let g = match &r.group {
                Some(name) => *ids.entry(name.as_str()).or_insert_with(|| {
                    n_groups += 1;
                    n_groups - 1
                }),
                None => {
                    n_groups += 1;
                    n_groups - 1
                }
            };
            g % k.max(1)
        })
        .collect();
    if k < 2 || n_groups < k {
        return Err(ReducerError::InsufficientData { needed: k.max(2), got: n_groups });
    }
    Ok(folds)
}

/// Grouped k-fold cross-validation (see [`fold_assignment`]). Returns the
/// RMSE over all held-out predictions.
pub fn cross_validate(h: &Hyperparameters, rows: &[TrainingRow], k: usize) -> Result<f64> {
    let folds = fold_assignment(rows, k)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.to_vector()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.volume).collect();
    let mut sse = 0.0;
    for fold in 0..k {
        let (mut xt, mut yt) = (Vec::new(), Vec::new());
        for i in (0..rows.len()).filter(|&i| folds[i] != fold) {
            xt.push(x[i].clone());
            yt.push(y[i]);
        }
        let model = train(h, &xt, &yt);
        for i in (0..rows.len()).filter(|&i| folds[i] == fold) {
            sse += (model.predict(&x[i]) - y[i]).powi(2);
        }
    }
    Ok((sse / rows.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducerModel {
    pub kind: RegressorKind,
    pub hyperparameters: Hyperparameters,
    pub params: FittedParams,
    pub cv_error: f64,
    pub feature_schema: Vec<String>,
}

impl ReducerModel {
    /// Unclamped regression output.
    pub fn predict_raw(&self, features: &ReducerFeatures) -> f64 {
        self.params.predict(&features.to_vector())
    }
}

/// Predicted volume fraction, clamped to `[min_volume, 1]`.
pub fn predict_volume(model: &ReducerModel, features: &ReducerFeatures, min_volume: f64) -> f64 {
    let v = model.predict_raw(features);
    if v.is_nan() {
        return 1.0;
    }
    v.clamp(min_volume.clamp(0.0, 1.0), 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub hyperparameters: Hyperparameters,
    pub cv_error: f64,
}

/// Grid search for one model family; the earliest grid entry wins ties. The
/// returned model is refitted on all rows.
pub fn fit(kind: RegressorKind, rows: &[TrainingRow], grid: &[Hyperparameters], k_folds: usize) -> Result<(ReducerModel, Vec<CandidateScore>)> {
    if grid.is_empty() {
        return Err(ReducerError::EmptyGrid(kind));
    }
    if let Some(h) = grid.iter().find(|h| h.kind() != kind) {
        return Err(ReducerError::KindMismatch(*h));
    }
    let scores: Vec<CandidateScore> = grid
        .par_iter()
        .map(|h| Ok(CandidateScore { hyperparameters: *h, cv_error: cross_validate(h, rows, k_folds)? }))
        .collect::<Result<_>>()?;
    let best = scores
        .iter()
        .fold(None::<&CandidateScore>, |best, s| match best {
            Some(b) if b.cv_error <= s.cv_error || s.cv_error.is_nan() => Some(b),
            _ => Some(s),
        })
        .expect("grid is non-empty");
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.to_vector()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.volume).collect();
    let model = ReducerModel {
        kind,
        hyperparameters: best.hyperparameters,
        params: train(&best.hyperparameters, &x, &y),
        cv_error: best.cv_error,
        feature_schema: ReducerFeatures::schema(),
    };
    Ok((model, scores))
}

/// Lowest cross-validation error; ties go to the simpler kind.
pub fn select_best(models: Vec<ReducerModel>) -> Result<ReducerModel> {
    models
        .into_iter()
        .min_by(|a, b| a.cv_error.total_cmp(&b.cv_error).then(a.kind.cmp(&b.kind)))
        .ok_or(ReducerError::NoCandidates)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub kind: RegressorKind,
    pub best_hyperparameters: Hyperparameters,
    pub cv_error: f64,
    pub grid: Vec<CandidateScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducerReport {
    pub n_rows: usize,
    pub k_folds: usize,
    pub selected: RegressorKind,
    pub candidates: Vec<KindReport>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub min_r2: f64,
    pub k_folds: usize,
    pub kinds: Vec<RegressorKind>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { min_r2: 0.5, k_folds: 5, kinds: RegressorKind::ALL.to_vec() }
    }
}

/// Builds the training set from `curves`, fits every requested kind over its
/// default grid and keeps the best.
pub fn train_reducer(curves: &[Curve], opts: &TrainOptions) -> Result<(ReducerModel, ReducerReport)> {
    let (rows, warnings) = build_training_set(curves, opts.min_r2);
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut models = Vec::new();
    let mut candidates = Vec::new();
    for &kind in &opts.kinds {
        let (model, grid) = fit(kind, &rows, &kind.default_grid(), opts.k_folds)?;
        candidates.push(KindReport {
            kind,
            best_hyperparameters: model.hyperparameters,
            cv_error: model.cv_error,
            grid,
        });
        models.push(model);
    }
    let best = select_best(models)?;
    let report = ReducerReport { n_rows: rows.len(), k_folds: opts.k_folds, selected: best.kind, candidates, warnings };
    Ok((best, report))
}
