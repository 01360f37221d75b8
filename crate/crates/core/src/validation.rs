//! Executes recommendations through the federated simulator and reports the
//! measured accuracy and footprint of each method.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{clean_shard, NodeId};
use crate::fl::{estimate_baseline_accuracy, run_federated, BaselineEstimate, FlConfig, FlRunResult};
use crate::recommender::{recommend, Method, Recommendation, RecommendationSet};
use crate::reducer::ReducerModel;
use crate::rng;
use crate::scenario::{MaterializedScenario, Result};
use crate::telemetry::{report, EmissionsLedger, EmissionsReport};

/// One simulated execution of a recommendation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRun {
    pub method: Method,
    pub rep: usize,
    pub seed: u64,
    pub nodes: Vec<NodeId>,
    pub accuracy: f64,
    pub rounds_executed: usize,
    pub total_kwh: f64,
    pub total_kg: f64,
    pub meets_threshold: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub mean_kwh: f64,
    pub mean_kg: f64,
    /// Runs whose accuracy reached the threshold.
    pub threshold_hits: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub accuracy_threshold: f64,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub recommendation: RecommendationSet,
    pub runs: Vec<ValidationRun>,
    pub summary: Vec<MethodSummary>,
    pub total_kwh: f64,
    pub total_kg: f64,
}

/// FL seed of repetition `rep`; shared by all methods so that they are
/// compared on the same initialisation and splits.
pub fn rep_seed(base: u64, rep: usize) -> u64 {
    rng::derive_seed(base, &[rng::tag("validation"), rep as u64])
}

/// The methods to run, in canonical order, always including Baseline.
pub fn method_plan(requested: &[Method]) -> Vec<Method> {
    Method::ALL
        .into_iter()
        .filter(|m| *m == Method::Baseline || requested.contains(m))
        .collect()
}

/// Per-node subsampling caps that make a node train on its recommended share.
/// Clean-only nodes are capped against their cleaned shard, the others
/// against their raw shard.
pub fn caps_for(rec: &Recommendation, m: &MaterializedScenario) -> BTreeMap<NodeId, f64> {
    let d = m.meta.train_size as f64;
    let volume: BTreeMap<&NodeId, f64> = m.roster.iter().map(|n| (&n.node_id, n.data_volume_fraction)).collect();
    rec.selected
        .iter()
        .map(|s| {
            let cap = if s.use_clean_only {
                let cleaned = clean_shard(&m.partition.shards[&s.node_id]).len();
                if cleaned == 0 {
                    1.0
                } else {
                    (s.contribution * d).round() / cleaned as f64
                }
            } else {
                let v = volume[&s.node_id];
                if v <= 0.0 {
                    1.0
                } else {
                    s.allocated_volume_fraction / v
                }
            };
            (s.node_id.clone(), cap.min(1.0))
        })
        .collect()
}

/// Runs one recommendation through the simulator and prices the result.
pub fn execute(
    m: &MaterializedScenario,
    rec: &Recommendation,
    fl: &FlConfig,
) -> Result<(FlRunResult, EmissionsReport)> {
    let participating: BTreeSet<NodeId> = rec.node_ids().into_iter().collect();
    let use_clean_only = rec.selected.iter().any(|s| s.use_clean_only);
    let run = run_federated(&m.partition, fl, &participating, &caps_for(rec, m), use_clean_only)?;
    let emissions = report(&run, &m.roster, &m.config.energy)?;
    Ok((run, emissions))
}

/// Trains one seeded node alone and records the run in the ledger.
pub fn estimate_accuracy(m: &MaterializedScenario, ledger: Option<&EmissionsLedger>) -> Result<BaselineEstimate> {
    let fl = m.config.fl.with_seed(rng::derive_seed(m.config.seed, &[rng::tag("estimation")]));
    let est = estimate_baseline_accuracy(&m.partition, &fl)?;
    if let Some(l) = ledger {
        l.append(&report(&est.run, &m.roster, &m.config.energy)?, "estimation")?;
    }
    Ok(est)
}

fn summarise(method: Method, runs: &[&ValidationRun]) -> MethodSummary {
    let n = runs.len();
    let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mean_accuracy = mean(&acc);
    let var = if n > 1 {
        acc.iter().map(|a| (a - mean_accuracy).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let threshold_hits = runs.iter().filter(|r| r.meets_threshold).count();
    MethodSummary {
        method,
        runs: n,
        mean_accuracy,
        std_accuracy: var.sqrt(),
        min_accuracy: acc.iter().copied().fold(f64::INFINITY, f64::min),
        max_accuracy: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_kwh: mean(&runs.iter().map(|r| r.total_kwh).collect::<Vec<_>>()),
        mean_kg: mean(&runs.iter().map(|r| r.total_kg).collect::<Vec<_>>()),
        threshold_hits,
        success_rate: if n == 0 { 0.0 } else { threshold_hits as f64 / n as f64 },
    }
}

/// Computes the recommendations and executes Baseline plus `methods`, each
/// `reps` times. Every run is appended to `ledger` under `validation`, in
/// method then repetition order.
pub fn validate(
    m: &MaterializedScenario,
    model: &ReducerModel,
    methods: &[Method],
    reps: usize,
    ledger: Option<&EmissionsLedger>,
) -> Result<ValidationReport> {
    let recommendation = recommend(&m.recommend_input(), model)?;
    let plan = method_plan(methods);
    let threshold = m.config.accuracy_threshold;
    let jobs: Vec<(Method, usize)> = plan.iter().flat_map(|&meth| (0..reps).map(move |r| (meth, r))).collect();
    let results: Vec<Result<(ValidationRun, EmissionsReport)>> = jobs
        .par_iter()
        .map(|&(method, rep)| {
            let rec = &recommendation.recommendations[&method];
            let seed = rep_seed(m.config.seed, rep);
            let (run, emissions) = execute(m, rec, &m.config.fl.with_seed(seed))?;
            Ok((
                ValidationRun {
                    method,
                    rep,
                    seed,
                    nodes: rec.node_ids(),
                    accuracy: run.final_accuracy,
                    rounds_executed: run.rounds_executed,
                    total_kwh: emissions.total_kwh,
                    total_kg: emissions.total_kg,
                    meets_threshold: run.final_accuracy >= threshold,
                },
                emissions,
            ))
        })
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        let (run, emissions) = r?;
        if let Some(l) = ledger {
            l.append(&emissions, "validation")?;
        }
        runs.push(run);
    }
    let summary = plan
        .iter()
        .map(|&meth| summarise(meth, &runs.iter().filter(|r| r.method == meth).collect::<Vec<_>>()))
        .collect();
    let mut kwh: Vec<f64> = runs.iter().map(|r| r.total_kwh).collect();
    let mut kg: Vec<f64> = runs.iter().map(|r| r.total_kg).collect();
    kwh.sort_by(f64::total_cmp);
    kg.sort_by(f64::total_cmp);
    Ok(ValidationReport {
        scenario: m.config.name.clone(),
        accuracy_threshold: threshold,
        reps,
        methods: plan,
        recommendation,
        runs,
        summary,
        total_kwh: kwh.iter().sum(),
        total_kg: kg.iter().sum(),
    })
}
