//! Shared configuration resolution: preset or `--config` file, then
//! `--set` overrides in order, then the global `--seed`.

use std::fs;
use std::path::Path;

use crate::error::{usage, CliError};
use eqt_train::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn config(self) -> RunConfig {
        match self {
            Preset::Desk => RunConfig::desk(),
            Preset::Paper => RunConfig::paper(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset `{other}` (expected `desk` or `paper`)")),
        }
    }
}

pub fn resolve_config(
    preset: Preset,
    config: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
) -> Result<RunConfig, CliError> {
    let mut run = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(usage)?
        }
        None => preset.config(),
    };
    for kv in sets {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set {kv}: expected key=value")))?;
        run = run.with_override(key.trim(), value.trim()).map_err(usage)?;
    }
    if let Some(s) = seed {
        run.seed = s;
    }
    run.validate().map_err(usage)?;
    Ok(run)
}
