//! Dataset representation, federated partitioning, quality measurement and
//! degradation injection.
//!
//! Missing values are stored as `NaN` inside the value vector, so every sample
//! keeps exactly `sequence_length` entries.

mod inject;
mod partition;
mod quality;
mod synthetic;
mod ucr;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inject::{degrade_shard, inject, DegradationSpec, Dimension, Scope, LEVEL_GRID};
pub use partition::{
    partition_by_fractions, partition_evenly, train_test_split, FederatedPartition, NodeId,
};
pub use quality::{clean_shard, inconsistent_ids, measure_quality, QualityProfile};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use ucr::{load_ucr_tsv, load_ucr_tsv_as, parse_ucr};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid reference: {0}")]
    InvalidReference(String),
    #[error("vertical degradation would hit all {0} nodes; at least one clean shard must remain")]
    AllNodesDegraded(usize),
    #[error("degradation level {0} outside [0, 1)")]
    InvalidLevel(f64),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("format error at line {line}: {message}")]
    FormatError { line: usize, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetType {
    Sensor,
    Simulated,
    Image,
    #[serde(rename = "ECG")]
    Ecg,
    Device,
    Synthetic,
}

impl DatasetType {
    pub const ALL: [DatasetType; 6] = [
        DatasetType::Sensor,
        DatasetType::Simulated,
        DatasetType::Image,
        DatasetType::Ecg,
        DatasetType::Device,
        DatasetType::Synthetic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetType::Sensor => "Sensor",
            DatasetType::Simulated => "Simulated",
            DatasetType::Image => "Image",
            DatasetType::Ecg => "ECG",
            DatasetType::Device => "Device",
            DatasetType::Synthetic => "Synthetic",
        }
    }
}

impl fmt::Display for DatasetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetType {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        DatasetType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DatasetError::InvalidDataset(format!("unknown dataset type `{s}`")))
    }
}

/// One labelled sequence. `NaN` entries in `values` mark missing points.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: u64,
    pub label: usize,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }
}

// Bitwise value comparison so that null markers compare equal to themselves.
impl PartialEq for Sample {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.label == other.label
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub type_tag: DatasetType,
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub sequence_length: usize,
}

/// Dataset metadata as exchanged with the reducer, the recommender and the
/// service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    #[serde(rename = "type")]
    pub type_tag: DatasetType,
    pub train_size: usize,
    pub classes: usize,
    pub sequence_length: usize,
}

impl TimeSeriesDataset {
    /// Builds a top-level dataset, enforcing every invariant (non-empty,
    /// at least two classes, uniform lengths, labels in range, unique ids).
    pub fn new(
        name: impl Into<String>,
        type_tag: DatasetType,
        samples: Vec<Sample>,
        num_classes: usize,
        sequence_length: usize,
    ) -> Result<Self> {
        let ds = TimeSeriesDataset {
            name: name.into(),
            type_tag,
            samples,
            num_classes,
            sequence_length,
        };
        if ds.samples.is_empty() {
            return Err(DatasetError::InvalidDataset("no samples".into()));
        }
        if num_classes < 2 {
            return Err(DatasetError::InvalidDataset(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        ds.check_samples()?;
        Ok(ds)
    }

    /// Same metadata, different samples. Used for shards, which may be empty.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Self {
        TimeSeriesDataset {
            name: self.name.clone(),
            type_tag: self.type_tag,
            samples,
            num_classes: self.num_classes,
            sequence_length: self.sequence_length,
        }
    }

    pub fn check_samples(&self) -> Result<()> {
        if self.sequence_length == 0 {
            return Err(DatasetError::InvalidDataset("sequence_length must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.samples {
            if s.values.len() != self.sequence_length {
                return Err(DatasetError::InvalidDataset(format!(
                    "sample {} has {} values, expected {}",
                    s.id,
                    s.values.len(),
                    self.sequence_length
                )));
            }
            if s.label >= self.num_classes {
                return Err(DatasetError::InvalidDataset(format!(
                    "sample {} label {} outside [0, {})",
                    s.id, s.label, self.num_classes
                )));
            }
            if !seen.insert(s.id) {
                return Err(DatasetError::InvalidDataset(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn max_id(&self) -> Option<u64> {
        self.samples.iter().map(|s| s.id).max()
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            type_tag: self.type_tag,
            train_size: self.len(),
            classes: self.num_classes,
            sequence_length: self.sequence_length,
        }
    }
}
