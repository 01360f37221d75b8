use serde::Serialize;

use super::{uniform_profiles, ExplorationDataset, Result};
use crate::dataset::{
    generate_synthetic, partition_evenly, DatasetType, SyntheticSpec, TimeSeriesDataset,
};
use crate::rng;

/// Metadata of a dataset explored by default, replicated synthetically.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub type_tag: DatasetType,
    pub train_samples: usize,
    pub classes: usize,
    pub sequence_length: usize,
    /// Difficulty of the synthetic replica.
    pub class_separation: f64,
}

pub const CATALOG: [CatalogEntry; 5] = [
    CatalogEntry {
        name: "StarlightCurves",
        type_tag: DatasetType::Sensor,
        train_samples: 8236,
        classes: 3,
        sequence_length: 1024,
        class_separation: 0.065,
    },
    CatalogEntry {
        name: "ChlorineConcentration",
        type_tag: DatasetType::Simulated,
        train_samples: 3840,
        classes: 3,
        sequence_length: 166,
        class_separation: 0.16,
    },
    CatalogEntry {
        name: "PhalangesOutlinesCorrect",
        type_tag: DatasetType::Image,
        train_samples: 1800,
        classes: 2,
        sequence_length: 80,
        class_separation: 0.25,
    },
    CatalogEntry {
        name: "Yoga",
        type_tag: DatasetType::Image,
        train_samples: 3000,
        classes: 2,
        sequence_length: 426,
        class_separation: 0.1,
    },
    CatalogEntry {
        name: "ItalyPowerDemand",
        type_tag: DatasetType::Sensor,
        train_samples: 1029,
        classes: 2,
        sequence_length: 24,
        class_separation: 0.4,
    },
];

pub fn find(name: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.name.eq_ignore_ascii_case(name))
}

/// How catalog datasets are materialised for a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions {
    pub n_nodes: usize,
    /// Multiplies the training-set size; 1.0 reproduces the listed size.
    pub scale: f64,
    pub power_watts: f64,
    pub carbon_intensity: f64,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { n_nodes: 10, scale: 1.0, power_watts: 100.0, carbon_intensity: 0.3, seed: 0 }
    }
}

/// Test-set size used for the synthetic replicas.
pub fn test_size(train: usize) -> usize {
    (train / 4).clamp(100, 1000)
}

impl CatalogEntry {
    pub fn build(&self, opts: &BuildOptions) -> Result<ExplorationDataset> {
        let train = ((self.train_samples as f64 * opts.scale).round() as usize).max(4 * opts.n_nodes);
        let test = test_size(train);
        let mut all = generate_synthetic(&SyntheticSpec {
            name: self.name.to_string(),
            n_samples: train + test,
            n_classes: self.classes,
            sequence_length: self.sequence_length,
            class_separation: self.class_separation,
            seed: rng::derive_seed(opts.seed, &[rng::tag(self.name)]),
        })?;
        all.type_tag = self.type_tag;
        let mut test_set = all.with_samples(all.samples[train..].to_vec());
        test_set.name = format!("{}-test", self.name);
        let train_set = all.with_samples(all.samples[..train].to_vec());
        exploration_dataset(self.name, &train_set, test_set, opts)
    }
}

/// Splits `train` evenly over `opts.n_nodes` uniform nodes and attaches `test`.
pub fn exploration_dataset(
    name: &str,
    train: &TimeSeriesDataset,
    test: TimeSeriesDataset,
    opts: &BuildOptions,
) -> Result<ExplorationDataset> {
    let partition = partition_evenly(train, opts.n_nodes, rng::derive_seed(opts.seed, &[rng::tag("partition")]))?
        .with_global_test(test)?;
    let nodes = uniform_profiles(&partition, opts.power_watts, opts.carbon_intensity);
    Ok(ExplorationDataset { name: name.to_string(), partition, nodes })
}
