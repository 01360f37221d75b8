//! Exploration phase: degrade datasets along one data dimension at a time,
//! train each variant through the federated simulator, record accuracy and
//! energy, and summarise the results as logarithmic curves.

pub mod catalog;
mod curve;
mod runner;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    inject, DatasetError, DatasetMeta, DegradationSpec, Dimension, FederatedPartition, Scope,
};
use crate::fl::{run_federated, FlConfig, FlError};
use crate::rng;
use crate::telemetry::{self, EnergyModel, NodeProfile, TelemetryError};

pub use curve::{
    compare_approaches, fit_curves, fit_log_curve, level_means, rank_dimensions, ApproachComparison,
    Curve, DimensionImpact, LevelComparison, LevelMean, LogFit, Metric, Winner,
};
pub use runner::{write_curves, write_jsonl_atomic, write_plot_csv, ExplorationDataset, GridRunner, GridSummary};

#[derive(Debug, Error)]
pub enum ExplorationError {
    #[error("cannot fit a curve: {0}")]
    DegenerateFit(String),
    #[error("invalid curve point: {0}")]
    InvalidPoint(String),
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Store(#[from] crate::jsonl::StoreError),
    #[error("cannot write plot data: {0}")]
    Plot(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ExplorationError> = std::result::Result<T, E>;

/// One dataset explored along one dimension with one reduction scope.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Experiment {
    pub dataset_name: String,
    #[serde(rename = "type")]
    pub scope: Scope,
    pub dimension: Dimension,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.dataset_name, self.scope, self.dimension)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubExperiment {
    pub experiment: Experiment,
    /// Degradation level, the fraction of data removed or corrupted.
    pub dimension_configuration: f64,
    pub repetition: usize,
}

impl SubExperiment {
    /// Identity used to recognise already completed work when resuming.
    pub fn key(&self) -> String {
        format!("{}@{:.6}#{}", self.experiment, self.dimension_configuration, self.repetition)
    }

    /// Seed shared by every sub-experiment of the same repetition, so level 0
    /// gives identical runs for both scopes.
    pub fn run_seed(&self, base: u64) -> u64 {
        rng::derive_seed(base, &[rng::tag("repetition"), self.repetition as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub sub_experiment: SubExperiment,
    pub accuracy: f64,
    pub energy_kwh: f64,
    pub emissions_kg: f64,
    pub rounds: usize,
    /// Samples processed over the whole run, summed across nodes.
    pub work: u64,
    pub participating_nodes: usize,
    /// Set when the run failed; such records are kept but never fitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Full Cartesian product in (dataset, type, dimension, level, repetition)
/// order.
pub fn build_grid(
    datasets: &[String],
    dimensions: &[Dimension],
    scopes: &[Scope],
    levels: &[f64],
    n_reps: usize,
) -> Vec<SubExperiment> {
    let mut grid = Vec::with_capacity(datasets.len() * scopes.len() * dimensions.len() * levels.len() * n_reps);
    for dataset in datasets {
        for &scope in scopes {
            for &dimension in dimensions {
                for &level in levels {
                    for repetition in 0..n_reps {
                        grid.push(SubExperiment {
                            experiment: Experiment {
                                dataset_name: dataset.clone(),
                                scope,
                                dimension,
                            },
                            dimension_configuration: level,
                            repetition,
                        });
                    }
                }
            }
        }
    }
    grid
}

/// Uniform exploration roster: every node of `partition` gets the same power
/// and carbon intensity, so energy differences come from work alone.
pub fn uniform_profiles(partition: &FederatedPartition, power_watts: f64, carbon_intensity: f64) -> Vec<NodeProfile> {
    let total = partition.total_train().max(1) as f64;
    partition
        .shards
        .iter()
        .map(|(id, shard)| NodeProfile {
            node_id: id.clone(),
            power_watts,
            location: "exploration".into(),
            carbon_intensity,
            data_volume_fraction: shard.len() as f64 / total,
            consistency: 1.0,
            completeness: 1.0,
        })
        .collect()
}

/// Degrades the base partition, trains it and prices the run. Failures are
/// returned as a record with `error` set.
pub fn run_sub_experiment(
    sub: &SubExperiment,
    base: &FederatedPartition,
    fl_config: &FlConfig,
    energy: &EnergyModel,
    nodes: &[NodeProfile],
) -> ExperimentRecord {
    match try_run(sub, base, fl_config, energy, nodes) {
        Ok(record) => record,
        Err(e) => {
            log::warn!("sub-experiment {} failed: {e}", sub.key());
            ExperimentRecord {
                sub_experiment: sub.clone(),
                accuracy: 0.0,
                energy_kwh: 0.0,
                emissions_kg: 0.0,
                rounds: 0,
                work: 0,
                participating_nodes: 0,
                error: Some(e.to_string()),
            }
        }
    }
}

fn try_run(
    sub: &SubExperiment,
    base: &FederatedPartition,
    fl_config: &FlConfig,
    energy: &EnergyModel,
    nodes: &[NodeProfile],
) -> Result<ExperimentRecord> {
    let seed = sub.run_seed(fl_config.seed);
    let spec = DegradationSpec {
        dimension: sub.experiment.dimension,
        level: sub.dimension_configuration,
        scope: sub.experiment.scope,
        seed: rng::derive_seed(seed, &[rng::tag("inject")]),
    };
    let degraded = inject(base, &spec)?;
    let config = fl_config.with_seed(seed);
    let all = degraded.node_ids().cloned().collect();
    let run = run_federated(&degraded, &config, &all, &Default::default(), false)?;
    let report = telemetry::report(&run, nodes, energy)?;
    Ok(ExperimentRecord {
        sub_experiment: sub.clone(),
        accuracy: run.final_accuracy,
        energy_kwh: report.total_kwh,
        emissions_kg: report.total_kg,
        rounds: run.rounds_executed,
        work: run.per_node_work.values().sum(),
        participating_nodes: run.per_node_work.len(),
        error: None,
    })
}

/// Metadata of the dataset a curve was fitted on; the reducer uses it as
/// features.
pub fn meta_of(partition: &FederatedPartition, name: &str) -> DatasetMeta {
    DatasetMeta {
        name: name.to_string(),
        type_tag: partition.global_test.type_tag,
        train_size: partition.total_train(),
        classes: partition.global_test.num_classes,
        sequence_length: partition.global_test.sequence_length,
    }
}
