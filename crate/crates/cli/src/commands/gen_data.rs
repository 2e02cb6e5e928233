//! `gen-data`: materialize the parity splits as text files named the way
//! the trainer looks them up (`parity_{split}_L{len}.txt`), using the same
//! per-split seed streams so a run with `data_dir` pointed here matches a
//! run that generates in memory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{runtime, usage, CliError};
use eqt_train::{generate_dataset, write_dataset, RunConfig};

pub fn cmd_gen_data(run: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let tc = run.train_counts();
    let ec = run.eval_counts();
    let mut paths = Vec::new();
    for (i, &len) in run.lengths.iter().enumerate() {
        for (split, count) in [("train", tc[i]), ("eval", ec[i])] {
            let ds = generate_dataset(count, len, run.seed, split);
            let path = out.join(format!("parity_{split}_L{len}.txt"));
            write_dataset(&ds, &path).map_err(runtime)?;
            paths.push(path);
        }
    }
    Ok(paths)
}
