use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Experiment, ExperimentRecord, ExplorationError, Result};
use crate::dataset::{DatasetMeta, Dimension, Scope, LEVEL_GRID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Accuracy,
    Energy,
}

/// Least-squares fit of `y = a·ln(x) + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
    pub n_points: usize,
}

impl LogFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x.ln() + self.b
    }
}

/// Fits `y = a·ln(x) + b` by ordinary least squares.
///
/// Points are sorted and exact duplicates removed first, so the result does
/// not depend on input order or on repeated points.
pub fn fit_log_curve(points: &[(f64, f64)]) -> Result<LogFit> {
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(ExplorationError::InvalidPoint(format!("({}, {}) needs x > 0 and finite y", p.0, p.1)));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits());
    if pts.len() < 2 || pts.iter().all(|p| p.0 == pts[0].0) {
        return Err(ExplorationError::DegenerateFit("need at least two distinct x values".into()));
    }
    let n = pts.len() as f64;
    let mean_u = pts.iter().map(|p| p.0.ln()).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut suu, mut suy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        let du = x.ln() - mean_u;
        let dy = y - mean_y;
        suu += du * du;
        suy += du * dy;
        syy += dy * dy;
    }
    let a = suy / suu;
    let b = mean_y - a * mean_u;
    let ss_res: f64 = pts.iter().map(|&(x, y)| (y - (a * x.ln() + b)).powi(2)).sum();
    let r2 = if syy > 0.0 {
        1.0 - ss_res / syy
    } else if ss_res <= f64::EPSILON * n {
        1.0
    } else {
        0.0
    };
    Ok(LogFit { a, b, r2, n_points: pts.len() })
}

/// Fitted relationship between the retained fraction `x = 1 − level` and a
/// metric, for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub experiment: Experiment,
    pub metric: Metric,
    pub a: f64,
    pub b: f64,
    pub r2: f64,
    pub n_points: usize,
    pub dataset: DatasetMeta,
}

impl Curve {
    pub fn fit(&self) -> LogFit {
        LogFit { a: self.a, b: self.b, r2: self.r2, n_points: self.n_points }
    }

    /// Curve value at retained fraction `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.fit().eval(x)
    }
}

/// Per-level averages over the successful repetitions of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMean {
    pub experiment: Experiment,
    pub level: f64,
    pub accuracy: f64,
    pub energy_kwh: f64,
    pub emissions_kg: f64,
    pub n_reps: usize,
}

/// Averages successful records per (experiment, level), ordered by
/// experiment then level.
pub fn level_means(records: &[ExperimentRecord]) -> Vec<LevelMean> {
    let mut groups: BTreeMap<(Experiment, u64), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let level = r.sub_experiment.dimension_configuration;
        groups
            .entry((r.sub_experiment.experiment.clone(), level.to_bits()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((experiment, bits), mut rs)| {
            rs.sort_by_key(|r| r.sub_experiment.repetition);
            let n = rs.len() as f64;
            LevelMean {
                experiment,
                level: f64::from_bits(bits),
                accuracy: rs.iter().map(|r| r.accuracy).sum::<f64>() / n,
                energy_kwh: rs.iter().map(|r| r.energy_kwh).sum::<f64>() / n,
                emissions_kg: rs.iter().map(|r| r.emissions_kg).sum::<f64>() / n,
                n_reps: rs.len(),
            }
        })
        .collect()
}

/// Fits accuracy and energy curves for every experiment on rep-averaged
/// values. Experiments with fewer than two surviving levels are skipped and
/// returned alongside the reason.
pub fn fit_curves(
    records: &[ExperimentRecord],
    metas: &BTreeMap<String, DatasetMeta>,
) -> Result<(Vec<Curve>, Vec<(Experiment, String)>)> {
    let mut by_exp: BTreeMap<Experiment, Vec<LevelMean>> = BTreeMap::new();
    for m in level_means(records) {
        by_exp.entry(m.experiment.clone()).or_default().push(m);
    }
    let mut curves = Vec::new();
    let mut skipped = Vec::new();
    for (experiment, means) in by_exp {
        let meta = metas
            .get(&experiment.dataset_name)
            .ok_or_else(|| ExplorationError::UnknownDataset(experiment.dataset_name.clone()))?;
        for metric in [Metric::Accuracy, Metric::Energy] {
            let points: Vec<(f64, f64)> = means
                .iter()
                .map(|m| {
                    let y = match metric {
                        Metric::Accuracy => m.accuracy,
                        Metric::Energy => m.energy_kwh,
                    };
                    (1.0 - m.level, y)
                })
                .collect();
            match fit_log_curve(&points) {
                Ok(fit) => curves.push(Curve {
                    experiment: experiment.clone(),
                    metric,
                    a: fit.a,
                    b: fit.b,
                    r2: fit.r2,
                    n_points: fit.n_points,
                    dataset: meta.clone(),
                }),
                Err(e) => {
                    log::warn!("skipping {experiment} {metric:?}: {e}");
                    skipped.push((experiment.clone(), e.to_string()));
                }
            }
        }
    }
    Ok((curves, skipped))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    H,
    V,
    Tie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelComparison {
    pub level: f64,
    pub accuracy_h: f64,
    pub accuracy_v: f64,
    pub energy_h: f64,
    pub energy_v: f64,
    /// Approach that is no worse on both metrics and better on one.
    pub dominant: Winner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproachComparison {
    pub dataset_name: String,
    pub volume_winner: Winner,
    pub h_wins: usize,
    pub v_wins: usize,
    pub levels: Vec<LevelComparison>,
}

fn find<'a>(curves: &'a [Curve], dataset: &str, scope: Scope, metric: Metric) -> Result<&'a Curve> {
    curves
        .iter()
        .find(|c| {
            c.experiment.dataset_name == dataset
                && c.experiment.scope == scope
                && c.experiment.dimension == Dimension::Volume
                && c.metric == metric
        })
        .ok_or_else(|| {
            ExplorationError::DegenerateFit(format!("no {scope} volume {metric:?} curve for {dataset}"))
        })
}

/// Compares horizontal and vertical volume reduction for one dataset at each
/// grid level, using the fitted curves. The winner is the approach that
/// dominates at more levels.
pub fn compare_approaches(curves: &[Curve], dataset: &str) -> Result<ApproachComparison> {
    let acc_h = find(curves, dataset, Scope::Horizontal, Metric::Accuracy)?;
    let acc_v = find(curves, dataset, Scope::Vertical, Metric::Accuracy)?;
    let en_h = find(curves, dataset, Scope::Horizontal, Metric::Energy)?;
    let en_v = find(curves, dataset, Scope::Vertical, Metric::Energy)?;
    let mut levels = Vec::new();
    let (mut h_wins, mut v_wins) = (0, 0);
    for level in LEVEL_GRID {
        let x = 1.0 - level;
        let (ah, av, eh, ev) = (acc_h.eval(x), acc_v.eval(x), en_h.eval(x), en_v.eval(x));
        let v_dom = av >= ah && ev <= eh && (av > ah || ev < eh);
        let h_dom = ah >= av && eh <= ev && (ah > av || eh < ev);
        let dominant = if v_dom {
            v_wins += 1;
            Winner::V
        } else if h_dom {
            h_wins += 1;
            Winner::H
        } else {
            Winner::Tie
        };
        levels.push(LevelComparison {
            level,
            accuracy_h: ah,
            accuracy_v: av,
            energy_h: eh,
            energy_v: ev,
            dominant,
        });
    }
    let volume_winner = match v_wins.cmp(&h_wins) {
        std::cmp::Ordering::Greater => Winner::V,
        std::cmp::Ordering::Less => Winner::H,
        std::cmp::Ordering::Equal => Winner::Tie,
    };
    Ok(ApproachComparison { dataset_name: dataset.to_string(), volume_winner, h_wins, v_wins, levels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionImpact {
    pub dimension: Dimension,
    /// Mean fitted accuracy drop from level 0 to level 0.8.
    pub impact: f64,
    pub n_curves: usize,
}

/// Orders dimensions by the accuracy their degradation costs, most harmful
/// first. Only accuracy curves are considered; ties keep dimension order.
pub fn rank_dimensions(curves: &[Curve]) -> Vec<DimensionImpact> {
    let mut drops: BTreeMap<Dimension, Vec<f64>> = BTreeMap::new();
    for c in curves.iter().filter(|c| c.metric == Metric::Accuracy) {
        drops
            .entry(c.experiment.dimension)
            .or_default()
            .push(c.eval(1.0) - c.eval(1.0 - LEVEL_GRID[LEVEL_GRID.len() - 1]));
    }
    let mut out: Vec<DimensionImpact> = drops
        .into_iter()
        .map(|(dimension, v)| DimensionImpact {
            dimension,
            impact: v.iter().sum::<f64>() / v.len() as f64,
            n_curves: v.len(),
        })
        .collect();
    out.sort_by(|a, b| b.impact.total_cmp(&a.impact).then(a.dimension.cmp(&b.dimension)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_recovery_on_noiseless_points() {
        let pts: Vec<(f64, f64)> = [0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&x| (x, 0.1 * f64::ln(x) + 0.9)).collect();
        let f = fit_log_curve(&pts).unwrap();
        assert!((f.a - 0.1).abs() < 1e-9 && (f.b - 0.9).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_points_interpolate() {
        let f = fit_log_curve(&[(0.5, 0.3), (1.0, 0.7)]).unwrap();
        assert!((f.eval(0.5) - 0.3).abs() < 1e-12 && (f.eval(1.0) - 0.7).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        assert!(matches!(fit_log_curve(&[(0.5, 0.1), (0.5, 0.2)]), Err(ExplorationError::DegenerateFit(_))));
        assert!(matches!(fit_log_curve(&[(0.5, 0.1)]), Err(ExplorationError::DegenerateFit(_))));
        assert!(matches!(fit_log_curve(&[(0.0, 0.1), (0.5, 0.2)]), Err(ExplorationError::InvalidPoint(_))));
    }

    #[test]
    fn order_and_duplicate_invariance() {
        let pts = vec![(0.2, 0.5), (1.0, 0.91), (0.6, 0.8), (0.4, 0.66)];
        let mut shuffled = vec![pts[2], pts[0], pts[3], pts[1], pts[0]];
        let a = fit_log_curve(&pts).unwrap();
        let b = fit_log_curve(&shuffled).unwrap();
        assert_eq!(a, b);
        shuffled.reverse();
        assert_eq!(fit_log_curve(&shuffled).unwrap(), a);
    }
}
