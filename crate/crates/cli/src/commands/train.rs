//! `train`: run training under the directory lock, leaving checkpoints,
//! the resolved `config.json`, and `train_log.csv` behind. A non-finite
//! loss aborts after saving `abort.eqtc`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{runtime, usage, CliError};
use crate::lock::RunLock;
use eqt_train::{load_splits, train, write_train_log, RunConfig, TrainError};

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub best_val_accuracy: f64,
    pub final_val_accuracy: f64,
    pub total_steps: u64,
    pub skipped_steps: u64,
    pub checkpoints: Vec<PathBuf>,
}

pub fn cmd_train(run: &RunConfig, out: &Path) -> Result<TrainSummary, CliError> {
    let _lock = RunLock::acquire(out)?;
    // Unreadable or garbled dataset files are an input problem: surface them
    // before any artifact is written. `train` reloads the splits cheaply.
    load_splits(run).map_err(usage)?;
    let config_path = out.join("config.json");
    fs::write(&config_path, run.to_json())
        .map_err(|e| runtime(format!("{}: {e}", config_path.display())))?;
    let outcome = train(run, Some(out)).map_err(|e| match e {
        TrainError::Config(_) => usage(e),
        other => runtime(other),
    })?;
    let log_path = out.join("train_log.csv");
    write_train_log(&outcome.log, &log_path).map_err(runtime)?;
    Ok(TrainSummary {
        out_dir: out.to_path_buf(),
        best_val_accuracy: outcome.best_val_accuracy,
        final_val_accuracy: outcome.final_val_accuracy,
        total_steps: outcome.total_steps,
        skipped_steps: outcome.skipped_steps,
        checkpoints: outcome.checkpoints,
    })
}
