//! Deterministic simulator and recommender for carbon-efficient federated
//! learning.
//!
//! The crate is organised around the three phases of the workflow:
//!
//! - [`exploration`] degrades datasets ([`dataset`]), trains them through the
//!   federated simulator ([`fl`]), prices the runs ([`telemetry`]) and fits
//!   logarithmic accuracy/energy curves.
//! - [`reducer`] learns how much data volume a new dataset needs to reach a
//!   target accuracy.
//! - [`recommender`] scores a roster of nodes and selects the configuration
//!   (nodes plus per-node data allocation) with the smallest footprint.
//!
//! [`scenario`] and [`validation`] tie the phases together for the CLI and the
//! HTTP service.

pub mod dataset;
pub mod exploration;
pub mod fl;
pub mod jsonl;
pub mod recommender;
pub mod reducer;
pub mod rng;
pub mod scenario;
pub mod telemetry;
pub mod validation;

pub use dataset::{NodeId, TimeSeriesDataset};
