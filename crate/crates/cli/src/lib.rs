//! Experiment driver behind the `eqt` binary: resolve a run configuration,
//! train and evaluate the parity models, and turn raw CSV artifacts into
//! the report table and figure data. Commands are plain functions so the
//! suites exercise them without spawning processes; the binary maps their
//! errors onto exit codes (0 ok, 2 usage/config, 3 runtime abort).

pub mod commands;
pub mod csvio;
pub mod error;
pub mod lock;

pub use commands::{
    build_report, cmd_eval, cmd_gen_data, cmd_params, cmd_probe, cmd_report, cmd_train, eval_csv,
    probe_csv, probe_summary, read_eval_csv, resolve_config, EvalRow, Preset, Report,
    ReportAverage, ReportRow, TrainSummary, EVAL_HEADER,
};
pub use error::CliError;
pub use lock::RunLock;
