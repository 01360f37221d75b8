use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{DatasetError, FederatedPartition, Result, TimeSeriesDataset};
use crate::rng::{self, Rng};

/// Degradation levels explored by default: 0% to 80% in steps of 20%.
pub const LEVEL_GRID: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// Fraction of a sequence replaced by nulls when a sample is made incomplete.
const MISSING_WINDOW: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Volume,
    Accuracy,
    Consistency,
    Completeness,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Volume,
        Dimension::Accuracy,
        Dimension::Consistency,
        Dimension::Completeness,
    ];
    pub const QUALITY: [Dimension; 3] =
        [Dimension::Accuracy, Dimension::Consistency, Dimension::Completeness];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Volume => "volume",
            Dimension::Accuracy => "accuracy",
            Dimension::Consistency => "consistency",
            Dimension::Completeness => "completeness",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DatasetError::InvalidSpec(format!("unknown dimension `{s}`")))
    }
}

/// Horizontal degrades every shard; vertical degrades whole shards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    #[serde(rename = "H")]
    Horizontal,
    #[serde(rename = "V")]
    Vertical,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Horizontal => "H",
            Scope::Vertical => "V",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scope {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h" | "horizontal" => Ok(Scope::Horizontal),
            "v" | "vertical" => Ok(Scope::Vertical),
            _ => Err(DatasetError::InvalidSpec(format!("unknown scope `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub dimension: Dimension,
    pub level: f64,
    pub scope: Scope,
    pub seed: u64,
}

fn count_at(level: f64, n: usize) -> usize {
    ((level * n as f64).round() as usize).min(n)
}

/// Degrades a single shard at `level` along `dimension`.
///
/// - Volume removes `round(level·n)` random samples.
/// - Accuracy moves `round(level·n)` labels to a uniformly random wrong class.
/// - Consistency duplicates `round(level·n/2)` samples under fresh ids (taken
///   from `next_id`) with a conflicting label, so both members of each pair
///   become inconsistent.
/// - Completeness nulls a contiguous half-length window in `round(level·n)`
///   samples.
pub fn degrade_shard(
    shard: &TimeSeriesDataset,
    dimension: Dimension,
    level: f64,
    rng: &mut Rng,
    next_id: &mut u64,
) -> TimeSeriesDataset {
    let n = shard.len();
    let mut out = shard.clone();
    if n == 0 || level <= 0.0 {
        return out;
    }
    match dimension {
        Dimension::Volume => {
            let drop = index::sample(rng, n, count_at(level, n)).into_vec();
            let mut keep = vec![true; n];
            for i in drop {
                keep[i] = false;
            }
            out.samples = shard
                .samples
                .iter()
                .zip(keep)
                .filter_map(|(s, k)| k.then(|| s.clone()))
                .collect();
        }
        Dimension::Accuracy => {
            for i in index::sample(rng, n, count_at(level, n)) {
                let s = &mut out.samples[i];
                s.label = wrong_label(s.label, shard.num_classes, rng);
            }
        }
        Dimension::Consistency => {
            let pairs = ((level * n as f64 / 2.0).round() as usize).min(n);
            let mut picked = index::sample(rng, n, pairs).into_vec();
            picked.sort_unstable();
            for i in picked {
                let mut dup = shard.samples[i].clone();
                dup.id = *next_id;
                *next_id += 1;
                dup.label = wrong_label(dup.label, shard.num_classes, rng);
                out.samples.push(dup);
            }
        }
        Dimension::Completeness => {
            let len = shard.sequence_length;
            let window = ((len as f64 * MISSING_WINDOW).round() as usize).clamp(1, len);
            for i in index::sample(rng, n, count_at(level, n)) {
                let offset = rng.random_range(0..=len - window);
                for v in &mut out.samples[i].values[offset..offset + window] {
                    *v = f64::NAN;
                }
            }
        }
    }
    out
}

fn wrong_label(label: usize, num_classes: usize, rng: &mut Rng) -> usize {
    (label + 1 + rng.random_range(0..num_classes - 1)) % num_classes
}

/// Applies `spec` to a copy of `partition`. The global test set is never
/// touched.
///
/// Vertical scope degrades `⌊level·n_nodes⌋` whole shards (chosen by seed) at
/// 100% and leaves the others untouched; for the same seed the chosen set at a
/// lower level is a prefix of the set at a higher level.
pub fn inject(partition: &FederatedPartition, spec: &DegradationSpec) -> Result<FederatedPartition> {
    if !(0.0..1.0).contains(&spec.level) {
        return Err(DatasetError::InvalidLevel(spec.level));
    }
    if spec.level == 0.0 {
        return Ok(partition.clone());
    }
    let mut next_id = partition.max_id().map_or(0, |m| m + 1);
    let mut out = partition.clone();

    match spec.scope {
        Scope::Horizontal => {
            for (node, shard) in out.shards.iter_mut() {
                let mut rng = rng::stream(spec.seed, &[rng::tag("inject"), node.stream_tag()]);
                *shard = degrade_shard(shard, spec.dimension, spec.level, &mut rng, &mut next_id);
            }
        }
        Scope::Vertical => {
            let n = partition.n_nodes();
            let k = (spec.level * n as f64 + 1e-9).floor() as usize;
            if k >= n {
                return Err(DatasetError::AllNodesDegraded(n));
            }
            let mut nodes: Vec<_> = partition.node_ids().cloned().collect();
            nodes.shuffle(&mut rng::stream(spec.seed, &[rng::tag("vertical")]));
            let mut chosen = nodes[..k].to_vec();
            chosen.sort();
            for node in chosen {
                let shard = out.shards.get_mut(&node).expect("node from partition");
                let mut rng = rng::stream(spec.seed, &[rng::tag("inject"), node.stream_tag()]);
                *shard = degrade_shard(shard, spec.dimension, 1.0, &mut rng, &mut next_id);
            }
        }
    }
    Ok(out)
}
