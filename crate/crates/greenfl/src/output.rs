use std::fmt::Write;

use serde::Serialize;

use greenfl_core::recommender::RecommendationSet;
use greenfl_core::reducer::ReducerReport;
use greenfl_core::validation::ValidationReport;

/// Pretty JSON with a trailing newline; used by the CLI and the HTTP API
/// alike so both emit identical bytes.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("domain types serialize");
    s.push('\n');
    s
}

pub fn recommendation_table(set: &RecommendationSet) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "predicted volume {:.3}  nodes {}  N^ {}  V_n {:.4}  V {:.4}",
        set.predicted_volume, set.n_c, set.n_hat, set.v_n, set.v_target
    )
    .unwrap();
    writeln!(out, "{:<9} {:>5} {:>8} {:>12} {:>12}  {:<8} nodes", "method", "n", "E", "kWh", "kg CO2e", "shortfall").unwrap();
    for rec in set.recommendations.values() {
        let nodes: Vec<String> = rec.selected.iter().map(|s| s.node_id.to_string()).collect();
        writeln!(
            out,
            "{:<9} {:>5} {:>8.4} {:>12.6} {:>12.6}  {:<8} {}",
            rec.method.as_str(),
            rec.selected.len(),
            rec.e_effective,
            rec.predicted_kwh,
            rec.predicted_kg,
            if rec.shortfall_flag { "yes" } else { "no" },
            nodes.join(",")
        )
        .unwrap();
    }
    for w in &set.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    out
}

pub fn validation_table(report: &ValidationReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "scenario {}  threshold {:.2}  reps {}",
        report.scenario, report.accuracy_threshold, report.reps
    )
    .unwrap();
    writeln!(
        out,
        "{:<9} {:>5} {:>9} {:>8} {:>12} {:>12} {:>10}",
        "method", "runs", "mean acc", "std", "mean kWh", "mean kg", "threshold"
    )
    .unwrap();
    for s in &report.summary {
        writeln!(
            out,
            "{:<9} {:>5} {:>9.4} {:>8.4} {:>12.6} {:>12.6} {:>5}/{:<4}",
            s.method.as_str(),
            s.runs,
            s.mean_accuracy,
            s.std_accuracy,
            s.mean_kwh,
            s.mean_kg,
            s.threshold_hits,
            s.runs
        )
        .unwrap();
    }
    writeln!(out, "total {:.6} kWh  {:.6} kg CO2e", report.total_kwh, report.total_kg).unwrap();
    out
}

pub fn reducer_table(report: &ReducerReport) -> String {
    let mut out = String::new();
    writeln!(out, "{} training rows, {}-fold cross-validation", report.n_rows, report.k_folds).unwrap();
    writeln!(out, "{:<18} {:>10}  best hyperparameters", "kind", "cv RMSE").unwrap();
    for c in &report.candidates {
        let hp = serde_json::to_string(&c.best_hyperparameters).expect("serializable");
        let mark = if c.kind == report.selected { " *" } else { "" };
        writeln!(out, "{:<18} {:>10.6}  {hp}{mark}", format!("{:?}", c.kind), c.cv_error).unwrap();
    }
    for w in &report.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    out
}
