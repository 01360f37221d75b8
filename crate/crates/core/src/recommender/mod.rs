//! Configuration recommender: ranks candidate nodes by carbon rate and data
//! quality, turns the reducer's volume prediction into a node count and
//! selects nodes with the NS, MSR and SR strategies next to the all-nodes
//! baseline.

mod roster;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetMeta, NodeId};
use crate::fl::FlConfig;
use crate::reducer::{predict_volume, ReducerFeatures, ReducerModel};
use crate::telemetry::{emissions_for, energy_for, overhead_energy, EnergyModel, NodeProfile};

pub use roster::{parse_roster_csv, resolve_roster, RosterRow};

#[derive(Debug, Error)]
pub enum RecommenderError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("no feasible node: {0}")]
    NoFeasibleNode(String),
    #[error("invalid roster: {0}")]
    InvalidRoster(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("invalid threshold {0}: must lie in (0, 1)")]
    InvalidThreshold(f64),
}

pub type Result<T, E = RecommenderError> = std::result::Result<T, E>;

/// Tolerance for volume comparisons, so fractions such as 0.1 + 0.2 compare
/// as intended.
const EPS: f64 = 1e-12;

/// Weights of the node score: one for the carbon term and one per quality
/// dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub w_energy: f64,
    pub w_quality: BTreeMap<String, f64>,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            w_energy: 0.7,
            w_quality: BTreeMap::from([("consistency".into(), 0.2), ("completeness".into(), 0.1)]),
        }
    }
}

pub const QUALITY_KEYS: [&str; 2] = ["consistency", "completeness"];

fn quality_value(node: &NodeProfile, key: &str) -> f64 {
    match key {
        "consistency" => node.consistency,
        "completeness" => node.completeness,
        _ => unreachable!("weights are validated"),
    }
}

impl ScoreWeights {
    pub fn new(w_energy: f64, consistency: f64, completeness: f64) -> Self {
        ScoreWeights {
            w_energy,
            w_quality: BTreeMap::from([("consistency".into(), consistency), ("completeness".into(), completeness)]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.w_quality.keys().find(|k| !QUALITY_KEYS.contains(&k.as_str())) {
            return Err(RecommenderError::InvalidWeights(format!(
                "unknown quality dimension `{k}` (known: {})",
                QUALITY_KEYS.join(", ")
            )));
        }
        let all = std::iter::once(self.w_energy).chain(self.w_quality.values().copied());
        if all.clone().any(|w| !(w >= 0.0 && w.is_finite())) {
            return Err(RecommenderError::InvalidWeights("weights must be non-negative".into()));
        }
        let sum: f64 = all.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(RecommenderError::InvalidWeights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedNode {
    pub node: NodeProfile,
    /// kg CO2e per hour while computing.
    pub co2_rate: f64,
    pub score: f64,
}

/// Scores every node and sorts by descending score, then ascending carbon
/// rate, then node id.
///
/// `score = w_E·(1 − co2/max_co2) + Σ w_i·q_i`; when every node has a zero
/// carbon rate the energy term is 1 for all.
pub fn score_nodes(roster: &[NodeProfile], weights: &ScoreWeights) -> Result<Vec<RankedNode>> {
    weights.validate()?;
    if roster.is_empty() {
        return Err(RecommenderError::NoFeasibleNode("empty roster".into()));
    }
    for n in roster {
        n.validate().map_err(|e| RecommenderError::InvalidRoster(e.to_string()))?;
    }
    let max_co2 = roster.iter().map(NodeProfile::co2_rate).fold(0.0, f64::max);
    let mut ranked: Vec<RankedNode> = roster
        .iter()
        .map(|n| {
            let co2 = n.co2_rate();
            let energy_term = if max_co2 > 0.0 { 1.0 - co2 / max_co2 } else { 1.0 };
            let quality: f64 = weights.w_quality.iter().map(|(k, w)| w * quality_value(n, k)).sum();
            RankedNode { node: n.clone(), co2_rate: co2, score: weights.w_energy * energy_term + quality }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.co2_rate.total_cmp(&b.co2_rate))
            .then(a.node.node_id.cmp(&b.node.node_id))
    });
    Ok(ranked)
}

/// Per-node volume `v_n = 1/n_c` and target volume `v = n_hat·v_n`, with
/// `n_hat` clamped to `[1, n_c]`.
pub fn volume_targets(n_c: usize, n_hat: usize) -> (f64, f64) {
    let n_c = n_c.max(1);
    let n_hat = n_hat.clamp(1, n_c);
    let v_n = 1.0 / n_c as f64;
    (v_n, n_hat as f64 * v_n)
}

/// Node count covering a volume fraction: `ceil(volume·n_c)` in `[1, n_c]`.
pub fn n_hat_for_volume(volume: f64, n_c: usize) -> usize {
    let n_c = n_c.max(1);
    let raw = (volume * n_c as f64 - 1e-9).ceil();
    if raw.is_nan() {
        return n_c;
    }
    (raw.max(1.0) as usize).min(n_c)
}

/// Node count predicted by the reducer for reaching `threshold` on a dataset
/// described by `meta`.
pub fn predict_n_hat(model: &ReducerModel, meta: &DatasetMeta, threshold: f64, n_c: usize) -> (usize, f64) {
    let volume = predict_volume(model, &ReducerFeatures::from_meta(meta, threshold), 1.0 / n_c.max(1) as f64);
    (n_hat_for_volume(volume, n_c), volume)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Baseline,
    #[serde(rename = "NS")]
    Ns,
    #[serde(rename = "MSR")]
    Msr,
    #[serde(rename = "SR")]
    Sr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::Ns, Method::Msr, Method::Sr];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "Baseline",
            Method::Ns => "NS",
            Method::Msr => "MSR",
            Method::Sr => "SR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = RecommenderError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| RecommenderError::UnknownMethod(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub node_id: NodeId,
    /// Fraction of the whole dataset the node is asked to provide.
    pub allocated_volume_fraction: f64,
    pub use_clean_only: bool,
    /// Fraction of the whole dataset it actually trains on (after cleaning).
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub method: Method,
    pub selected: Vec<Selection>,
    pub n_hat: usize,
    pub v_n: f64,
    pub v_target: f64,
    pub e_effective: f64,
    pub predicted_kwh: f64,
    pub predicted_kg: f64,
    pub shortfall_flag: bool,
}

impl Recommendation {
    pub fn node_ids(&self) -> Vec<NodeId> {
        self.selected.iter().map(|s| s.node_id.clone()).collect()
    }

    pub fn total_allocated(&self) -> f64 {
        self.selected.iter().map(|s| s.allocated_volume_fraction).sum()
    }
}

fn clean_fraction(node: &NodeProfile) -> f64 {
    node.consistency * node.completeness
}

fn empty(method: Method, n_hat: usize, v_n: f64, v_target: f64) -> Recommendation {
    Recommendation {
        method,
        selected: Vec::new(),
        n_hat,
        v_n,
        v_target,
        e_effective: 0.0,
        predicted_kwh: 0.0,
        predicted_kg: 0.0,
        shortfall_flag: false,
    }
}

/// Walks the ranking and accepts nodes holding at least `v_n`, `limit` at
/// most; `clean` switches to clean-data contributions.
fn walk(ranked: &[RankedNode], limit: usize, v_n: f64, clean: bool) -> Vec<Selection> {
    ranked
        .iter()
        .filter(|r| r.node.data_volume_fraction + EPS >= v_n)
        .take(limit)
        .map(|r| Selection {
            node_id: r.node.node_id.clone(),
            allocated_volume_fraction: v_n,
            use_clean_only: clean,
            contribution: if clean {
                v_n.min(r.node.data_volume_fraction * clean_fraction(&r.node))
            } else {
                v_n
            },
        })
        .collect()
}

fn check_feasible(selected: &[Selection], v_n: f64) -> Result<()> {
    if selected.is_empty() {
        Err(RecommenderError::NoFeasibleNode(format!("no node holds the per-node volume {v_n:.4}")))
    } else {
        Ok(())
    }
}

/// Node selection: the first `n_hat` nodes in ranking order that hold at
/// least `v_n`, each trimmed to exactly `v_n`.
pub fn select_ns(ranked: &[RankedNode], n_hat: usize, v_n: f64) -> Result<Recommendation> {
    let selected = walk(ranked, n_hat, v_n, false);
    check_feasible(&selected, v_n)?;
    let mut rec = empty(Method::Ns, n_hat, v_n, n_hat as f64 * v_n);
    rec.shortfall_flag = selected.len() < n_hat;
    rec.e_effective = selected.iter().map(|s| s.contribution).sum();
    rec.selected = selected;
    Ok(rec)
}

/// Minimal smart reduction: the NS nodes, training on clean data only. The
/// effective volume is the sum of `min(v_n, volume·consistency·completeness)`.
pub fn select_msr(ranked: &[RankedNode], n_hat: usize, v_n: f64) -> Result<Recommendation> {
    let selected = walk(ranked, n_hat, v_n, true);
    check_feasible(&selected, v_n)?;
    let mut rec = empty(Method::Msr, n_hat, v_n, n_hat as f64 * v_n);
    rec.shortfall_flag = selected.len() < n_hat;
    rec.e_effective = selected.iter().map(|s| s.contribution).sum();
    rec.selected = selected;
    Ok(rec)
}

/// Smart reduction: the MSR walk continued past `n_hat` nodes until the
/// clean volume reaches the target or the feasible nodes run out.
pub fn select_sr(ranked: &[RankedNode], n_hat: usize, v_n: f64) -> Result<Recommendation> {
    let v_target = n_hat as f64 * v_n;
    let mut selected = Vec::new();
    let mut e = 0.0;
    for s in walk(ranked, usize::MAX, v_n, true) {
        if e + EPS >= v_target {
            break;
        }
        e += s.contribution;
        selected.push(s);
    }
    check_feasible(&selected, v_n)?;
    let mut rec = empty(Method::Sr, n_hat, v_n, v_target);
    rec.shortfall_flag = e + EPS < v_target;
    rec.e_effective = e;
    rec.selected = selected;
    Ok(rec)
}

/// All nodes with all their data, no cleaning.
pub fn select_baseline(ranked: &[RankedNode]) -> Recommendation {
    let n_c = ranked.len();
    let (v_n, _) = volume_targets(n_c, n_c);
    let mut rec = empty(Method::Baseline, n_c, v_n, 1.0);
    rec.selected = ranked
        .iter()
        .map(|r| Selection {
            node_id: r.node.node_id.clone(),
            allocated_volume_fraction: r.node.data_volume_fraction,
            use_clean_only: false,
            contribution: r.node.data_volume_fraction,
        })
        .collect();
    rec.e_effective = rec.selected.iter().map(|s| s.contribution).sum();
    rec
}

/// Expected footprint of a recommendation: each node trains on its
/// contribution for `local_epochs` per round over `n_rounds_max` rounds,
/// pays the per-round overhead, and clean-only nodes also scan their whole
/// shard once.
pub fn price(rec: &mut Recommendation, roster: &[NodeProfile], dataset_size: usize, fl: &FlConfig, energy: &EnergyModel) {
    let by_id: BTreeMap<&NodeId, &NodeProfile> = roster.iter().map(|n| (&n.node_id, n)).collect();
    let (mut kwh, mut kg) = (0.0, 0.0);
    let rounds = fl.n_rounds_max as u64;
    for s in &rec.selected {
        let node = by_id[&s.node_id];
        let train = (s.contribution * dataset_size as f64).round() as u64 * (fl.local_epochs as u64) * rounds;
        let scan = if s.use_clean_only {
            (node.data_volume_fraction * dataset_size as f64).round() as u64
        } else {
            0
        };
        let e = energy_for(train + scan, node, energy) + overhead_energy(rounds, node, energy);
        kwh += e;
        kg += emissions_for(e, node);
    }
    rec.predicted_kwh = kwh;
    rec.predicted_kg = kg;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendInput {
    pub roster: Vec<NodeProfile>,
    pub dataset: DatasetMeta,
    pub accuracy_threshold: f64,
    pub weights: ScoreWeights,
    #[serde(default)]
    pub accuracy_estimation: Option<f64>,
    #[serde(default)]
    pub fl: FlConfig,
    #[serde(default)]
    pub energy: EnergyModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub predicted_volume: f64,
    pub n_c: usize,
    pub n_hat: usize,
    pub v_n: f64,
    pub v_target: f64,
    pub ranking: Vec<RankedNode>,
    pub recommendations: BTreeMap<Method, Recommendation>,
    pub warnings: Vec<String>,
}

/// Runs every method on the scored roster and prices each outcome.
pub fn recommend(input: &RecommendInput, model: &ReducerModel) -> Result<RecommendationSet> {
    let t = input.accuracy_threshold;
    if !(t > 0.0 && t < 1.0) {
        return Err(RecommenderError::InvalidThreshold(t));
    }
    let ranked = score_nodes(&input.roster, &input.weights)?;
    let n_c = ranked.len();
    let (n_hat, predicted_volume) = predict_n_hat(model, &input.dataset, t, n_c);
    let (v_n, v_target) = volume_targets(n_c, n_hat);

    let mut warnings = Vec::new();
    if let Some(est) = input.accuracy_estimation {
        if t < est {
            warnings.push(format!(
                "accuracy threshold {t:.2} is below the single-node estimate {est:.2}; it is likely met with little data"
            ));
        } else if t > est + 0.3 {
            warnings.push(format!(
                "accuracy threshold {t:.2} is more than 0.3 above the single-node estimate {est:.2}; it may be unreachable"
            ));
        }
    }

    let mut recommendations = BTreeMap::new();
    recommendations.insert(Method::Baseline, select_baseline(&ranked));
    recommendations.insert(Method::Ns, select_ns(&ranked, n_hat, v_n)?);
    recommendations.insert(Method::Msr, select_msr(&ranked, n_hat, v_n)?);
    recommendations.insert(Method::Sr, select_sr(&ranked, n_hat, v_n)?);
    for rec in recommendations.values_mut() {
        price(rec, &input.roster, input.dataset.train_size, &input.fl, &input.energy);
        if rec.shortfall_flag {
            warnings.push(format!(
                "{}: only {:.3} of the target volume {:.3} is available",
                rec.method, rec.e_effective, rec.v_target
            ));
        }
    }
    Ok(RecommendationSet { predicted_volume, n_c, n_hat, v_n, v_target, ranking: ranked, recommendations, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(id: &str, watts: f64, intensity: f64, volume: f64, cons: f64, comp: f64) -> NodeProfile {
        NodeProfile {
            node_id: NodeId::from(id),
            power_watts: watts,
            location: "X".into(),
            carbon_intensity: intensity,
            data_volume_fraction: volume,
            consistency: cons,
            completeness: comp,
        }
    }

    #[test]
    fn weights_validation() {
        assert!(ScoreWeights::default().validate().is_ok());
        assert!(ScoreWeights::new(0.7, 0.2, 0.2).validate().is_err());
        assert!(ScoreWeights::new(1.2, -0.1, -0.1).validate().is_err());
        let mut w = ScoreWeights::default();
        w.w_quality.insert("timeliness".into(), 0.0);
        assert!(w.validate().is_err());
    }

    #[test]
    fn max_emitter_score() {
        let roster = vec![node("a", 100.0, 0.5, 0.5, 0.9, 0.9), node("b", 10.0, 0.5, 0.5, 1.0, 1.0)];
        let r = score_nodes(&roster, &ScoreWeights::default()).unwrap();
        let a = r.iter().find(|n| n.node.node_id.as_str() == "a").unwrap();
        assert!((a.score - 0.27).abs() < 1e-9);
    }

    #[test]
    fn zero_carbon_roster_has_full_energy_term() {
        let roster = vec![node("a", 100.0, 0.0, 0.5, 1.0, 1.0), node("b", 10.0, 0.0, 0.5, 1.0, 1.0)];
        let r = score_nodes(&roster, &ScoreWeights::default()).unwrap();
        assert!(r.iter().all(|n| (n.score - 1.0).abs() < 1e-12));
        assert_eq!(r[0].node.node_id.as_str(), "a");
    }

    #[test]
    fn n_hat_rounding() {
        assert_eq!(n_hat_for_volume(0.55, 10), 6);
        assert_eq!(n_hat_for_volume(0.6, 10), 6);
        assert_eq!(n_hat_for_volume(1.0, 10), 10);
        assert_eq!(n_hat_for_volume(0.05, 10), 1);
    }
}
