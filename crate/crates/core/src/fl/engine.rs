use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learner::{Features, Layout, Learner, LearnerParams, Mlp};
use super::{FlError, Result};
use crate::dataset::{clean_shard, FederatedPartition, NodeId, TimeSeriesDataset};
use crate::rng;

/// Federated training hyperparameters. Missing fields deserialize to the
/// defaults, so scenario files only need to list overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlConfig {
    pub n_rounds_max: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub hidden_dim: usize,
}

impl Default for FlConfig {
    fn default() -> Self {
        FlConfig {
            n_rounds_max: 30,
            local_epochs: 3,
            batch_size: 16,
            learning_rate: 0.01,
            early_stop_patience: 3,
            early_stop_min_delta: 1e-3,
            seed: 0,
            val_fraction: 0.10,
            hidden_dim: 32,
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FlError::InvalidConfig(m.to_string()));
        if self.n_rounds_max == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return bad("rounds, epochs and batch size must be positive");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a non-negative number");
        }
        if !(self.early_stop_min_delta >= 0.0) {
            return bad("early_stop_min_delta must be non-negative");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        FlConfig { seed, ..self.clone() }
    }
}

/// Replaces null markers by per-feature means of `shard`; a feature that is
/// null everywhere becomes 0.
pub fn impute(shard: &TimeSeriesDataset) -> Features {
    let dim = shard.sequence_length;
    let mut sums = vec![0.0; dim];
    let mut counts = vec![0usize; dim];
    for s in &shard.samples {
        for (t, v) in s.values.iter().enumerate() {
            if !v.is_nan() {
                sums[t] += v;
                counts[t] += 1;
            }
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    let mut data = Vec::with_capacity(shard.len() * dim);
    for s in &shard.samples {
        data.extend(s.values.iter().zip(&means).map(|(v, m)| if v.is_nan() { *m } else { *v }));
    }
    Features {
        data,
        labels: shard.samples.iter().map(|s| s.label).collect(),
        dim,
    }
}

fn select_rows(x: &Features, rows: &[usize]) -> Features {
    let mut data = Vec::with_capacity(rows.len() * x.dim);
    for &r in rows {
        data.extend_from_slice(x.row(r));
    }
    Features {
        data,
        labels: rows.iter().map(|&r| x.labels[r]).collect(),
        dim: x.dim,
    }
}

/// A node's training material after cleaning, capping, imputation and the
/// train/validation split.
#[derive(Clone, Debug)]
pub struct LocalData {
    pub train: Features,
    pub val: Features,
    /// Distinct samples held after preparation.
    pub shard_size: usize,
    /// Raw samples scanned by the cleaning pass (0 when not cleaning).
    pub preprocessing_work: u64,
}

/// Cleans (optionally), subsamples to `cap` of the remaining shard, imputes
/// and splits into train/validation. The split depends only on the seed and
/// node, never on the round.
pub fn prepare_shard(
    shard: &TimeSeriesDataset,
    cap: f64,
    use_clean_only: bool,
    config: &FlConfig,
    node: &NodeId,
) -> LocalData {
    let preprocessing_work = if use_clean_only { shard.len() as u64 } else { 0 };
    let cleaned = if use_clean_only { clean_shard(shard) } else { shard.clone() };
    let n = cleaned.len();
    let keep = if cap >= 1.0 || n == 0 {
        n
    } else {
        ((cap * n as f64).round() as usize).clamp(1, n)
    };
    let capped = if keep < n {
        let mut rng = rng::stream(config.seed, &[rng::tag("cap"), node.stream_tag()]);
        let mut idx = index::sample(&mut rng, n, keep).into_vec();
        idx.sort_unstable();
        cleaned.with_samples(idx.into_iter().map(|i| cleaned.samples[i].clone()).collect())
    } else {
        cleaned
    };

    let all = impute(&capped);
    let n = all.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(config.seed, &[rng::tag("split"), node.stream_tag()]));
    let (train, val) = match n {
        0 => (Features { dim: all.dim, ..Default::default() }, Features { dim: all.dim, ..Default::default() }),
        1 => (all.clone(), all.clone()),
        _ => {
            let n_val = ((n as f64 * config.val_fraction).round() as usize).clamp(1, n - 1);
            let (val_idx, train_idx) = order.split_at(n_val);
            let mut val_idx = val_idx.to_vec();
            let mut train_idx = train_idx.to_vec();
            val_idx.sort_unstable();
            train_idx.sort_unstable();
            (select_rows(&all, &train_idx), select_rows(&all, &val_idx))
        }
    };
    LocalData { train, val, shard_size: n, preprocessing_work }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalUpdate {
    pub params: LearnerParams,
    pub val_loss: f64,
    pub samples_processed: u64,
    pub n_train: usize,
}

fn train_prepared<L: Learner>(
    learner: &L,
    params: &LearnerParams,
    data: &LocalData,
    config: &FlConfig,
    node: &NodeId,
    round: usize,
) -> Result<LocalUpdate> {
    if data.train.is_empty() {
        return Err(FlError::NodeSkipped(node.clone()));
    }
    let mut rng = rng::stream(config.seed, &[rng::tag("local"), node.stream_tag(), round as u64]);
    let mut params = params.clone();
    let mut grad = vec![0.0; params.weights.len()];
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for _ in 0..config.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            learner.loss_and_gradient(&params, &data.train, batch, Some(&mut grad));
            for (w, g) in params.weights.iter_mut().zip(&grad) {
                *w -= config.learning_rate * g;
            }
        }
    }
    let val_loss = learner.loss(&params, &data.val);
    Ok(LocalUpdate {
        params,
        val_loss,
        samples_processed: (data.shard_size * config.local_epochs) as u64,
        n_train: data.train.len(),
    })
}

/// Runs `local_epochs` of seeded mini-batch SGD on one node's shard and
/// reports the loss on its local validation split.
pub fn train_local<L: Learner>(
    learner: &L,
    params: &LearnerParams,
    shard: &TimeSeriesDataset,
    config: &FlConfig,
    node: &NodeId,
    round: usize,
) -> Result<LocalUpdate> {
    let data = prepare_shard(shard, 1.0, false, config, node);
    train_prepared(learner, params, &data, config, node, round)
}

/// Sample-weighted mean of parameter vectors.
///
/// Updates are put in a canonical order before summing, so the result is
/// bit-identical for any permutation of the input.
pub fn aggregate(updates: &[(LearnerParams, usize)]) -> Result<LearnerParams> {
    let first = updates
        .first()
        .ok_or_else(|| FlError::AggregationError("no updates".into()))?;
    let layout = first.0.layout;
    if let Some((p, _)) = updates
        .iter()
        .find(|(p, _)| p.layout != layout || p.weights.len() != layout.n_weights())
    {
        return Err(FlError::AggregationError(format!(
            "layout mismatch: {:?} vs {:?}",
            p.layout, layout
        )));
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(FlError::AggregationError("updates carry no samples".into()));
    }
    let mut sorted: Vec<&(LearnerParams, usize)> = updates.iter().collect();
    sorted.sort_by(|a, b| {
        a.1.cmp(&b.1).then_with(|| {
            a.0.weights
                .iter()
                .zip(&b.0.weights)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut weights = vec![0.0; layout.n_weights()];
    for (p, n) in sorted {
        let share = *n as f64 / total as f64;
        for (acc, w) in weights.iter_mut().zip(&p.weights) {
            *acc += share * w;
        }
    }
    Ok(LearnerParams { weights, layout })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round_idx: usize,
    pub global_val_loss: f64,
    pub global_test_accuracy: f64,
    pub per_node_samples_processed: BTreeMap<NodeId, u64>,
    /// Local model losses on local validation splits. Logged only.
    pub local_val_loss: BTreeMap<NodeId, f64>,
    pub stopped_early: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlRunResult {
    pub final_accuracy: f64,
    pub rounds_executed: usize,
    pub round_logs: Vec<RoundLog>,
    pub per_node_work: BTreeMap<NodeId, u64>,
    /// Samples scanned while cleaning shards before training.
    pub preprocessing_work: BTreeMap<NodeId, u64>,
}

impl FlRunResult {
    /// Number of rounds each node took part in.
    pub fn rounds_participated(&self) -> BTreeMap<NodeId, u64> {
        let mut out = BTreeMap::new();
        for log in &self.round_logs {
            for node in log.per_node_samples_processed.keys() {
                *out.entry(node.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn stopped_early(&self) -> bool {
        self.round_logs.last().is_some_and(|l| l.stopped_early)
    }
}

/// Federated averaging with the default [`Mlp`] learner.
pub fn run_federated(
    partition: &FederatedPartition,
    config: &FlConfig,
    participating: &BTreeSet<NodeId>,
    caps: &BTreeMap<NodeId, f64>,
    use_clean_only: bool,
) -> Result<FlRunResult> {
    let learner = Mlp::new(Layout {
        input_dim: partition.global_test.sequence_length,
        hidden_dim: config.hidden_dim,
        n_classes: partition.global_test.num_classes,
    });
    run_federated_with(&learner, partition, config, participating, caps, use_clean_only)
}

/// Federated averaging: every round each participating node trains locally
/// from the current global model, the server averages the updates weighted by
/// training-set size, and the global model is scored on the pooled local
/// validation splits (driving early stopping) and on the global test set.
pub fn run_federated_with<L: Learner>(
    learner: &L,
    partition: &FederatedPartition,
    config: &FlConfig,
    participating: &BTreeSet<NodeId>,
    caps: &BTreeMap<NodeId, f64>,
    use_clean_only: bool,
) -> Result<FlRunResult> {
    config.validate()?;
    if let Some(node) = participating.iter().find(|n| !partition.shards.contains_key(*n)) {
        return Err(FlError::UnknownNode(node.clone()));
    }
    if let Some((node, cap)) = caps.iter().find(|(_, c)| !(**c > 0.0 && **c <= 1.0)) {
        return Err(FlError::InvalidConfig(format!("cap {cap} for {node} outside (0, 1]")));
    }
    if partition.global_test.is_empty() {
        return Err(FlError::InvalidConfig("global test set is empty".into()));
    }

    let prepared: Vec<(NodeId, LocalData)> = participating
        .par_iter()
        .map(|node| {
            let cap = caps.get(node).copied().unwrap_or(1.0);
            let data = prepare_shard(&partition.shards[node], cap, use_clean_only, config, node);
            (node.clone(), data)
        })
        .collect();
    let preprocessing_work: BTreeMap<NodeId, u64> = prepared
        .iter()
        .filter(|(_, d)| d.preprocessing_work > 0)
        .map(|(n, d)| (n.clone(), d.preprocessing_work))
        .collect();
    let active: Vec<&(NodeId, LocalData)> =
        prepared.iter().filter(|(_, d)| !d.train.is_empty()).collect();
    if active.is_empty() {
        return Err(FlError::EmptyFederation);
    }
    let test = impute(&partition.global_test);

    let mut global = learner.init(config.seed);
    let mut best = f64::INFINITY;
    let mut wait = 0;
    let mut round_logs = Vec::new();
    let mut per_node_work: BTreeMap<NodeId, u64> = BTreeMap::new();

    for round in 0..config.n_rounds_max {
        let updates: Vec<LocalUpdate> = active
            .par_iter()
            .map(|(node, data)| train_prepared(learner, &global, data, config, node, round))
            .collect::<Result<_>>()?;
        let pairs: Vec<(LearnerParams, usize)> =
            updates.iter().map(|u| (u.params.clone(), u.n_train)).collect();
        global = aggregate(&pairs)?;

        let (loss_sum, val_count) = active.iter().fold((0.0, 0usize), |(s, c), (_, d)| {
            (s + learner.loss(&global, &d.val) * d.val.len() as f64, c + d.val.len())
        });
        let global_val_loss = loss_sum / val_count as f64;
        let global_test_accuracy = learner.accuracy(&global, &test);

        let mut per_node = BTreeMap::new();
        let mut local_val_loss = BTreeMap::new();
        for ((node, _), u) in active.iter().zip(&updates) {
            per_node.insert(node.clone(), u.samples_processed);
            local_val_loss.insert(node.clone(), u.val_loss);
            *per_node_work.entry(node.clone()).or_insert(0) += u.samples_processed;
        }

        if global_val_loss < best - config.early_stop_min_delta {
            best = global_val_loss;
            wait = 0;
        } else {
            wait += 1;
        }
        let stopped_early = wait >= config.early_stop_patience;
        round_logs.push(RoundLog {
            round_idx: round,
            global_val_loss,
            global_test_accuracy,
            per_node_samples_processed: per_node,
            local_val_loss,
            stopped_early,
        });
        if stopped_early {
            break;
        }
    }

    Ok(FlRunResult {
        final_accuracy: round_logs.last().map_or(0.0, |l| l.global_test_accuracy),
        rounds_executed: round_logs.len(),
        round_logs,
        per_node_work,
        preprocessing_work,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub node: NodeId,
    pub accuracy: f64,
    pub work: u64,
    pub run: FlRunResult,
}

/// Trains one randomly chosen (seeded) non-empty node alone for a full
/// federated cycle.
pub fn estimate_baseline_accuracy(
    partition: &FederatedPartition,
    config: &FlConfig,
) -> Result<BaselineEstimate> {
    let candidates: Vec<&NodeId> = partition
        .shards
        .iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(n, _)| n)
        .collect();
    let node = (*candidates
        .choose(&mut rng::stream(config.seed, &[rng::tag("baseline-node")]))
        .ok_or(FlError::EmptyFederation)?)
    .clone();
    let run = run_federated(
        partition,
        config,
        &BTreeSet::from([node.clone()]),
        &BTreeMap::new(),
        false,
    )?;
    Ok(BaselineEstimate {
        work: run.per_node_work.values().sum(),
        accuracy: run.final_accuracy,
        node,
        run,
    })
}
