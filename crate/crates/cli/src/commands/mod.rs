//! One module per subcommand; each exposes a plain function the binary and
//! the test suites call directly.

mod config;
mod eval;
mod gen_data;
mod params;
mod probe;
mod report;
mod train;

pub use config::{resolve_config, Preset};
pub use eval::{cmd_eval, eval_csv, EVAL_HEADER};
pub use gen_data::cmd_gen_data;
pub use params::cmd_params;
pub use probe::{cmd_probe, probe_csv, probe_summary};
pub use report::{build_report, cmd_report, read_eval_csv, EvalRow, Report, ReportAverage, ReportRow};
pub use train::{cmd_train, TrainSummary};
