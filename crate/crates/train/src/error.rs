//! Error surface for training and persistence. Shape/contract violations
//! panic at the call site; these are the recoverable, user-facing failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {why}")]
    Format { path: String, why: String },

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, step {step}, batch {batch} — aborting")]
    NonFiniteLoss { epoch: usize, step: u64, batch: usize },

    #[error("checkpoint {path}: {why}")]
    Checkpoint { path: String, why: String },

    #[error("run directory {0} is locked by another process (stale `lock` file?)")]
    Locked(String),
}
