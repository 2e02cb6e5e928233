//! `eval`: load a checkpoint, rebuild the eval splits its config
//! describes, and measure accuracy per (length, K).

use std::path::Path;

use crate::error::{usage, CliError};
use eqt_train::{evaluate, load_checkpoint, load_splits, LengthMetrics, RunConfig, Variant};

pub const EVAL_HEADER: &str =
    "variant,seq_len,K,token_accuracy,mean_iters_used,mean_energy_init,mean_energy_final,n_tokens";

pub fn cmd_eval(
    checkpoint: &Path,
    lengths: Option<&[usize]>,
    ks: Option<&[usize]>,
    seed: Option<u64>,
) -> Result<(Vec<LengthMetrics>, String), CliError> {
    let ck = load_checkpoint(checkpoint).map_err(usage)?;
    let mut run = RunConfig::from_json(&ck.config_json).map_err(usage)?;
    if let Some(s) = seed {
        run.seed = s;
    }
    if let Some(ls) = lengths {
        run.lengths = ls.to_vec();
    }
    for &l in &run.lengths {
        if l > run.arch.max_seq_len {
            return Err(usage(format!(
                "eval length {l} exceeds max_seq_len {}",
                run.arch.max_seq_len
            )));
        }
    }
    run.validate().map_err(usage)?;
    let ks: Vec<usize> = match run.variant {
        // The standard variant has no refinement loop; K is recorded as 0.
        Variant::Standard => vec![0],
        Variant::Eqt => ks.map(<[usize]>::to_vec).unwrap_or_else(|| run.eval_k.clone()),
    };
    let (_, eval_sets) = load_splits(&run).map_err(usage)?;
    let mut rows = Vec::new();
    for ds in &eval_sets {
        for &k in &ks {
            rows.push(evaluate(&run, &ck.params, ds, k));
        }
    }
    let csv = eval_csv(&rows);
    Ok((rows, csv))
}

pub fn eval_csv(rows: &[LengthMetrics]) -> String {
    let mut s = String::from(EVAL_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.6},{:.6},{}\n",
            r.variant,
            r.seq_len,
            r.k,
            r.token_accuracy,
            r.mean_iters_used,
            r.mean_energy_init,
            r.mean_energy_final,
            r.n_tokens
        ));
    }
    s
}
