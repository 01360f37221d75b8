//! Command-line interface and HTTP service over `greenfl-core`.

pub mod cli;
pub mod output;
pub mod server;

use std::fmt;

use greenfl_core::exploration::ExplorationError;
use greenfl_core::reducer::ReducerError;
use greenfl_core::scenario::ScenarioError;

/// An error caused by the caller's input.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Maps an error to the process exit code: 2 for bad input, 3 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USER;
        }
        if let Some(e) = cause.downcast_ref::<ScenarioError>() {
            return if e.is_user_error() { EXIT_USER } else { EXIT_INTERNAL };
        }
        if let Some(e) = cause.downcast_ref::<ExplorationError>() {
            if matches!(e, ExplorationError::UnknownDataset(_) | ExplorationError::Dataset(_)) {
                return EXIT_USER;
            }
        }
        if let Some(ReducerError::InsufficientData { .. } | ReducerError::EmptyGrid(_)) = cause.downcast_ref::<ReducerError>() {
            return EXIT_USER;
        }
        if cause.is::<greenfl_core::fl::FlError>() || cause.is::<serde_json::Error>() {
            return EXIT_USER;
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied) {
                return EXIT_USER;
            }
        }
    }
    EXIT_INTERNAL
}
