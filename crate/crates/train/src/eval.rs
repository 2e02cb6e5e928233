//! Teacher-forced evaluation, difficulty regimes, and the energy/loss
//! alignment probe.

use crate::config::{RunConfig, Variant};
use crate::data::Dataset;
use crate::loss::make_batch;
use eqt_model::{eqt_forward, standard_logits, Params};
use eqt_tensor::ops::{argmax_last, log_softmax_last, reshape};
use eqt_tensor::{no_grad, Tensor};

/// Table-row metrics for one (variant, length, K) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthMetrics {
    pub variant: Variant,
    pub seq_len: usize,
    pub k: usize,
    /// Percent of positions whose argmax equals the parity label.
    pub token_accuracy: f64,
    pub mean_iters_used: f64,
    pub mean_energy_init: f64,
    pub mean_energy_final: f64,
    pub n_tokens: usize,
}

/// Evaluate one split at `k` refinement iterations (ignored and recorded
/// as 0 for the standard variant). Deterministic in all inputs.
pub fn evaluate(
    run: &RunConfig,
    params: &Params<f32>,
    ds: &Dataset,
    k: usize,
) -> LengthMetrics {
    let arch = run.arch();
    let n = ds.samples.len();
    let bs = run.train.batch_size.min(n);
    let ec = run.eqt_config(k);
    let (mut hits, mut tokens) = (0usize, 0usize);
    let (mut iters_sum, mut e_init_sum, mut e_final_sum, mut rows_sum) = (0.0, 0.0, 0.0, 0.0);
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(bs) {
        let batch = make_batch(ds, chunk, u64::MAX / 2);
        let (logits, stats) = no_grad(|| match run.variant {
            Variant::Standard => (standard_logits(params, &arch, &batch.tokens), None),
            Variant::Eqt => {
                let out = eqt_forward(params, &arch, &batch.tokens, &ec, 0, run.seed, None, false);
                let iters: f64 = out.traces.iter().map(|t| t.iterations_used as f64).sum();
                let e0: f64 = out.energy_initial.iter().sum();
                let e1: f64 = out
                    .energy_final
                    .as_ref()
                    .map(|v| v.iter().sum())
                    .unwrap_or_else(|| out.energy_initial.iter().sum());
                (out.logits, Some((iters, e0, e1, out.layout.rows() as f64)))
            }
        });
        let shape = logits.shape().to_vec();
        let flat = reshape(&logits, &[shape[0] * shape[1], shape[2]]);
        hits += argmax_last(&flat).iter().zip(&batch.labels).filter(|(a, l)| *a == *l).count();
        tokens += batch.labels.len();
        if let Some((iters, e0, e1, rows)) = stats {
            iters_sum += iters;
            e_init_sum += e0;
            e_final_sum += e1;
            rows_sum += rows;
        }
    }
    let denom = if rows_sum > 0.0 { rows_sum } else { 1.0 };
    LengthMetrics {
        variant: run.variant,
        seq_len: ds.length,
        k: if run.variant == Variant::Standard { 0 } else { k },
        token_accuracy: 100.0 * hits as f64 / tokens as f64,
        mean_iters_used: iters_sum / denom,
        mean_energy_init: e_init_sum / denom,
        mean_energy_final: e_final_sum / denom,
        n_tokens: tokens,
    }
}

// ── difficulty regimes ──

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Regime {
    Easy,
    Medium,
    Hard,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Easy => "Easy",
            Regime::Medium => "Medium",
            Regime::Hard => "Hard",
        })
    }
}

/// Easy: standard accuracy > 95%. Hard: < 70%. Medium: in between.
pub fn regime_of(std_accuracy: f64) -> Regime {
    if std_accuracy > 95.0 {
        Regime::Easy
    } else if std_accuracy < 70.0 {
        Regime::Hard
    } else {
        Regime::Medium
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSummary {
    /// (length, regime) per evaluated length, in input order.
    pub labels: Vec<(usize, Regime)>,
    /// (regime, mean EqT − Standard delta) for regimes that occur.
    pub mean_delta: Vec<(Regime, f64)>,
}

/// Partition lengths by the standard model's accuracy and average the
/// accuracy delta within each regime. Input rows: (length, std, eqt).
pub fn difficulty_regimes(rows: &[(usize, f64, f64)]) -> RegimeSummary {
    let labels: Vec<(usize, Regime)> =
        rows.iter().map(|&(l, std, _)| (l, regime_of(std))).collect();
    let mut mean_delta = Vec::new();
    for regime in [Regime::Easy, Regime::Medium, Regime::Hard] {
        let deltas: Vec<f64> = rows
            .iter()
            .filter(|&&(_, std, _)| regime_of(std) == regime)
            .map(|&(_, std, eqt)| eqt - std)
            .collect();
        if !deltas.is_empty() {
            mean_delta.push((regime, deltas.iter().sum::<f64>() / deltas.len() as f64));
        }
    }
    RegimeSummary { labels, mean_delta }
}

// ── alignment probe ──

/// Per-token refinement bookkeeping: energies and prediction losses at the
/// proposal f and at the refined state h*.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub energy_f: f64,
    pub energy_h: f64,
    pub loss_f: f64,
    pub loss_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentStats {
    pub records: Vec<TokenRecord>,
    /// Mean L(f) − L(h*).
    pub mean_energy_drop: f64,
    /// Mean ℓ(f) − ℓ(h*) (positive = refinement helps prediction).
    pub mean_loss_improvement: f64,
    /// Pearson correlation between the two drops.
    pub pearson: f64,
    /// Mean loss improvement per L(f)-decile (ascending deciles).
    pub decile_loss_improvement: Vec<f64>,
}

fn per_token_nll(logits: &Tensor<f32>, labels: &[usize]) -> Vec<f64> {
    let shape = logits.shape();
    let (rows, vocab) = (shape[0] * shape[1], shape[2]);
    assert_eq!(labels.len(), rows, "one label per position");
    let logp = log_softmax_last(&reshape(logits, &[rows, vocab]));
    (0..rows).map(|r| -logp.at(&[r, labels[r]]) as f64).collect()
}

/// Compare the proposal and refined predictions token by token.
pub fn alignment_probe(
    run: &RunConfig,
    params: &Params<f32>,
    ds: &Dataset,
    k: usize,
) -> AlignmentStats {
    assert_eq!(run.variant, Variant::Eqt, "alignment probe needs the equilibrium variant");
    let arch = run.arch();
    let n = ds.samples.len();
    let bs = run.train.batch_size.min(n);
    let ec = run.eqt_config(k);
    let ec0 = run.eqt_config(0);
    let mut records = Vec::new();
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(bs) {
        let batch = make_batch(ds, chunk, u64::MAX / 2);
        no_grad(|| {
            let refined = eqt_forward(params, &arch, &batch.tokens, &ec, 0, run.seed, None, false);
            let proposal = eqt_forward(params, &arch, &batch.tokens, &ec0, 0, run.seed, None, false);
            let nll_h = per_token_nll(&refined.logits, &batch.labels);
            let nll_f = per_token_nll(&proposal.logits, &batch.labels);
            let e_f = &refined.energy_initial;
            let zeros;
            let e_h: &Vec<f64> = match refined.energy_final.as_ref() {
                Some(v) => v,
                None => {
                    zeros = refined.energy_initial.clone();
                    &zeros
                }
            };
            // Rows are in plan order; map back to flat positions.
            for (row, &flat) in refined.layout.perm.iter().enumerate() {
                records.push(TokenRecord {
                    energy_f: e_f[row],
                    energy_h: e_h[row],
                    loss_f: nll_f[flat],
                    loss_h: nll_h[flat],
                });
            }
        });
    }

    let n = records.len() as f64;
    let de: Vec<f64> = records.iter().map(|r| r.energy_f - r.energy_h).collect();
    let dl: Vec<f64> = records.iter().map(|r| r.loss_f - r.loss_h).collect();
    let mean_energy_drop = de.iter().sum::<f64>() / n;
    let mean_loss_improvement = dl.iter().sum::<f64>() / n;
    let (me, ml) = (mean_energy_drop, mean_loss_improvement);
    let cov: f64 = de.iter().zip(&dl).map(|(a, b)| (a - me) * (b - ml)).sum::<f64>() / n;
    let ve: f64 = de.iter().map(|a| (a - me).powi(2)).sum::<f64>() / n;
    let vl: f64 = dl.iter().map(|b| (b - ml).powi(2)).sum::<f64>() / n;
    let pearson = if ve > 0.0 && vl > 0.0 { cov / (ve * vl).sqrt() } else { 0.0 };

    // Deciles of L(f), ascending.
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a].energy_f.partial_cmp(&records[b].energy_f).expect("finite energies")
    });
    let mut decile_loss_improvement = Vec::with_capacity(10);
    for dec in 0..10 {
        let lo = dec * records.len() / 10;
        let hi = ((dec + 1) * records.len() / 10).max(lo + 1).min(records.len());
        let slice = &order[lo..hi];
        let mean = slice.iter().map(|&i| dl[i]).sum::<f64>() / slice.len() as f64;
        decile_loss_improvement.push(mean);
    }

    AlignmentStats {
        records,
        mean_energy_drop,
        mean_loss_improvement,
        pearson,
        decile_loss_improvement,
    }
}
