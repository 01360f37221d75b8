//! Deterministic federated-averaging simulator.
//!
//! Every random choice (weight init, train/validation split, shuffling,
//! subsampling) draws from a stream keyed by `(seed, node, round)`, so a run
//! is bit-identical no matter how client training is scheduled.

mod engine;
mod learner;

use thiserror::Error;

use crate::dataset::NodeId;

pub use engine::{
    aggregate, estimate_baseline_accuracy, impute, prepare_shard, run_federated,
    run_federated_with, train_local, BaselineEstimate, FlConfig, FlRunResult, LocalData,
    LocalUpdate, RoundLog,
};
pub use learner::{Features, Layout, Learner, LearnerParams, Mlp};

#[derive(Debug, Error)]
pub enum FlError {
    #[error("node {0} has no training data")]
    NodeSkipped(NodeId),
    #[error("aggregation failed: {0}")]
    AggregationError(String),
    #[error("no participating node holds training data")]
    EmptyFederation,
    #[error("node {0} is not part of the partition")]
    UnknownNode(NodeId),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = FlError> = std::result::Result<T, E>;
