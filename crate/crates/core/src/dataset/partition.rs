use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result, TimeSeriesDataset};
use crate::rng;

/// Identifier of one federated client.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Self {
        NodeId(s.into())
    }

    /// Zero-padded default name for the `index`-th node, so lexicographic and
    /// numeric order agree.
    pub fn indexed(index: usize) -> Self {
        NodeId(format!("node-{index:02}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub(crate) fn stream_tag(&self) -> u64 {
        rng::tag(&self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederatedPartition {
    pub shards: BTreeMap<NodeId, TimeSeriesDataset>,
    pub global_test: TimeSeriesDataset,
}

impl FederatedPartition {
    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.shards.keys()
    }

    pub fn n_nodes(&self) -> usize {
        self.shards.len()
    }

    pub fn total_train(&self) -> usize {
        self.shards.values().map(TimeSeriesDataset::len).sum()
    }

    pub fn max_id(&self) -> Option<u64> {
        self.shards
            .values()
            .chain(std::iter::once(&self.global_test))
            .filter_map(TimeSeriesDataset::max_id)
            .max()
    }

    /// Attaches a held-out test set. Its sample ids must not appear in any shard.
    pub fn with_global_test(mut self, test: TimeSeriesDataset) -> Result<Self> {
        if test.sequence_length != self.global_test.sequence_length {
            return Err(DatasetError::InvalidPartition(format!(
                "test sequence length {} differs from training length {}",
                test.sequence_length, self.global_test.sequence_length
            )));
        }
        self.global_test = test;
        self.check_disjoint()?;
        Ok(self)
    }

    /// Verifies that shards are pairwise disjoint and disjoint from the test set.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (node, shard) in &self.shards {
            for s in &shard.samples {
                if !seen.insert(s.id) {
                    return Err(DatasetError::InvalidPartition(format!(
                        "sample {} appears twice (last in {node})",
                        s.id
                    )));
                }
            }
        }
        if let Some(s) = self.global_test.samples.iter().find(|s| seen.contains(&s.id)) {
            return Err(DatasetError::InvalidPartition(format!(
                "test sample {} also used for training",
                s.id
            )));
        }
        Ok(())
    }
}

fn empty_test(dataset: &TimeSeriesDataset) -> TimeSeriesDataset {
    let mut test = dataset.with_samples(Vec::new());
    test.name = format!("{}-test", dataset.name);
    test
}

/// Splits `dataset` into `n_nodes` shards whose sizes differ by at most one.
/// The global test set starts empty; attach one with
/// [`FederatedPartition::with_global_test`].
pub fn partition_evenly(
    dataset: &TimeSeriesDataset,
    n_nodes: usize,
    seed: u64,
) -> Result<FederatedPartition> {
    if n_nodes == 0 || n_nodes > dataset.len() {
        return Err(DatasetError::InvalidPartition(format!(
            "cannot split {} samples across {n_nodes} nodes",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::tag("partition")]));

    let base = dataset.len() / n_nodes;
    let extra = dataset.len() % n_nodes;
    let mut shards = BTreeMap::new();
    let mut cursor = 0;
    for i in 0..n_nodes {
        let size = base + usize::from(i < extra);
        let mut idx = order[cursor..cursor + size].to_vec();
        idx.sort_unstable();
        cursor += size;
        let samples = idx.into_iter().map(|j| dataset.samples[j].clone()).collect();
        shards.insert(NodeId::indexed(i), dataset.with_samples(samples));
    }
    Ok(FederatedPartition {
        shards,
        global_test: empty_test(dataset),
    })
}

/// Assigns each node `fraction × |dataset|` samples (largest-remainder
/// rounding). Fractions must be non-negative and sum to at most one.
pub fn partition_by_fractions(
    dataset: &TimeSeriesDataset,
    fractions: &[(NodeId, f64)],
    seed: u64,
) -> Result<FederatedPartition> {
    if fractions.is_empty() {
        return Err(DatasetError::InvalidPartition("no nodes".into()));
    }
    let sum: f64 = fractions.iter().map(|(_, f)| *f).sum();
    if fractions.iter().any(|(_, f)| !(0.0..=1.0).contains(f)) || sum > 1.0 + 1e-9 {
        return Err(DatasetError::InvalidPartition(format!(
            "volume fractions must lie in [0, 1] and sum to at most 1 (sum = {sum})"
        )));
    }
    let distinct: BTreeSet<_> = fractions.iter().map(|(n, _)| n).collect();
    if distinct.len() != fractions.len() {
        return Err(DatasetError::InvalidPartition("duplicate node id".into()));
    }

    let n = dataset.len();
    let total = ((sum.min(1.0) * n as f64).round() as usize).min(n);
    let mut counts: Vec<usize> = fractions
        .iter()
        .map(|(_, f)| (f * n as f64).floor() as usize)
        .collect();
    let mut remainders: Vec<(usize, f64)> = fractions
        .iter()
        .enumerate()
        .map(|(i, (_, f))| (i, f * n as f64 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut assigned: usize = counts.iter().sum();
    for (i, _) in remainders.iter().cycle().take(fractions.len() * 2) {
        if assigned >= total {
            break;
        }
        counts[*i] += 1;
        assigned += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::tag("partition")]));
    let mut shards = BTreeMap::new();
    let mut cursor = 0;
    for ((node, _), count) in fractions.iter().zip(counts) {
        let mut idx = order[cursor..cursor + count].to_vec();
        idx.sort_unstable();
        cursor += count;
        let samples = idx.into_iter().map(|j| dataset.samples[j].clone()).collect();
        shards.insert(node.clone(), dataset.with_samples(samples));
    }
    Ok(FederatedPartition {
        shards,
        global_test: empty_test(dataset),
    })
}

/// Seeded split into (train, test); the test part holds
/// `round(test_fraction × n)` samples.
pub fn train_test_split(
    dataset: &TimeSeriesDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let n = dataset.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    if !(0.0..1.0).contains(&test_fraction) || n_test == 0 || n_test >= n {
        return Err(DatasetError::InvalidPartition(format!(
            "test fraction {test_fraction} leaves an empty side for {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::tag("train-test")]));
    let (test_idx, train_idx) = order.split_at(n_test);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|j| dataset.samples[j].clone()).collect::<Vec<_>>()
    };
    let train = dataset.with_samples(pick(train_idx));
    let mut test = dataset.with_samples(pick(test_idx));
    test.name = format!("{}-test", dataset.name);
    Ok((train, test))
}
