//! `eqt`: train, evaluate, and report on the parity benchmark with the
//! standard and equilibrium-refinement transformer variants.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eqt_cli::error::usage;
use eqt_cli::{
    cmd_eval, cmd_gen_data, cmd_params, cmd_probe, cmd_report, cmd_train, probe_csv,
    probe_summary, resolve_config, CliError, Preset, RunLock,
};
use eqt_solver::{ProbeSpec, SpectrumKind};

#[derive(Parser)]
#[command(name = "eqt", version, about = "Equilibrium-refinement parity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a run; writes checkpoints, config.json, and train_log.csv.
    Train {
        /// Run-config JSON file (defaults to the chosen preset).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in starting point when no --config is given.
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Override one config field, e.g. --set train.epochs=3 (repeatable).
        #[arg(long = "set", value_name = "key=value")]
        set: Vec<String>,
        /// Root seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (locked while training).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint per (length, K); writes eval.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Lengths to evaluate (default: the checkpoint's length grid).
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        /// Refinement iteration counts (default: the checkpoint's eval_k).
        #[arg(long = "k", value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Dataset seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for eval.csv (default: print to stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge eval CSVs into report.md and fig_a..fig_d.csv.
    Report {
        /// Eval CSV produced by `eqt eval` (repeatable; both variants).
        #[arg(long = "eval", required = true)]
        eval: Vec<PathBuf>,
        /// train_log.csv to include as training curves (repeatable).
        #[arg(long = "train-log")]
        train_log: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic quadratic convergence probe; prints a summary.
    Probe {
        #[arg(long, default_value_t = 0.1)]
        mu: f64,
        #[arg(long, default_value_t = 10.0)]
        l_smooth: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 16)]
        dimension: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Eigenvalue layout: edge-clustered or log-spaced.
        #[arg(long, default_value = "edge-clustered")]
        spectrum: String,
        /// Directory for probe.csv (default: print to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the parity dataset files for the resolved configuration.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long = "set", value_name = "key=value")]
        set: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print parameter counts for the resolved configuration.
    Params {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long = "set", value_name = "key=value")]
        set: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn preset_of(name: &str) -> Result<Preset, CliError> {
    name.parse().map_err(usage)
}

fn spectrum_of(name: &str) -> Result<SpectrumKind, CliError> {
    match name {
        "edge-clustered" => Ok(SpectrumKind::EdgeClustered),
        "log-spaced" => Ok(SpectrumKind::LogSpaced),
        other => Err(usage(format!(
            "unknown spectrum `{other}` (expected `edge-clustered` or `log-spaced`)"
        ))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, preset, set, seed, out } => {
            let run = resolve_config(preset_of(&preset)?, config.as_deref(), &set, seed)?;
            let summary = cmd_train(&run, &out)?;
            println!(
                "trained {} for {} steps ({} skipped): best val acc {:.2}%, final {:.2}%",
                run.variant,
                summary.total_steps,
                summary.skipped_steps,
                summary.best_val_accuracy,
                summary.final_val_accuracy
            );
            println!("artifacts in {}", summary.out_dir.display());
            Ok(())
        }
        Command::Eval { checkpoint, lengths, k, seed, out } => {
            let (_, csv) = cmd_eval(&checkpoint, lengths.as_deref(), k.as_deref(), seed)?;
            if let Some(dir) = out {
                let _lock = RunLock::acquire(&dir)?;
                let path = dir.join("eval.csv");
                std::fs::write(&path, &csv)
                    .map_err(|e| eqt_cli::error::runtime(format!("{}: {e}", path.display())))?;
            }
            print!("{csv}");
            Ok(())
        }
        Command::Report { eval, train_log, out } => {
            let evals: Vec<&std::path::Path> = eval.iter().map(PathBuf::as_path).collect();
            let logs: Vec<&std::path::Path> = train_log.iter().map(PathBuf::as_path).collect();
            let report = cmd_report(&evals, &logs, &out)?;
            print!("{}", report.markdown);
            Ok(())
        }
        Command::Probe { mu, l_smooth, gamma, alpha, k, dimension, seed, spectrum, out } => {
            let spec = ProbeSpec {
                mu,
                l_smooth,
                gamma,
                alpha,
                k,
                dimension,
                seed: seed.unwrap_or(0),
                spectrum: spectrum_of(&spectrum)?,
            };
            let diag = cmd_probe(&spec);
            print!("{}", probe_summary(&diag));
            let csv = probe_csv(&diag);
            if let Some(dir) = out {
                let _lock = RunLock::acquire(&dir)?;
                let path = dir.join("probe.csv");
                std::fs::write(&path, &csv)
                    .map_err(|e| eqt_cli::error::runtime(format!("{}: {e}", path.display())))?;
            } else {
                print!("{csv}");
            }
            Ok(())
        }
        Command::GenData { config, preset, set, seed, out } => {
            let run = resolve_config(preset_of(&preset)?, config.as_deref(), &set, seed)?;
            for path in cmd_gen_data(&run, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Params { config, preset, set, seed } => {
            let run = resolve_config(preset_of(&preset)?, config.as_deref(), &set, seed)?;
            print!("{}", cmd_params(&run));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
