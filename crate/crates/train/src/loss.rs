//! Batch assembly and the combined training objective
//! (prediction NLL + β · energy at the refined state).

use crate::config::Variant;
use crate::data::Dataset;
use eqt_model::{
    eqt_forward, standard_logits, ArchConfig, EqtConfig, MemoryBuffer, Params, TokenBatch,
};
use eqt_solver::SolverTrace;
use eqt_tensor::ops::{
    add, argmax_last, log_softmax_last, mul, reshape, scale, sum_all, sum_axis,
};
use eqt_tensor::{Element, Tensor};

/// One teacher-forced batch: inputs are the raw bits, labels the prefix
/// parity at every position.
#[derive(Debug, Clone)]
pub struct Batch {
    pub tokens: TokenBatch,
    /// Flat [batch · len] cumulative-parity targets.
    pub labels: Vec<usize>,
}

/// Assemble `indices` of `ds` into one batch. Sequence ids combine the
/// dataset tag and sample index so mask draws differ across sequences.
pub fn make_batch(ds: &Dataset, indices: &[usize], id_base: u64) -> Batch {
    assert!(!indices.is_empty(), "empty batch");
    let len = ds.length;
    let mut ids = Vec::with_capacity(indices.len() * len);
    let mut labels = Vec::with_capacity(indices.len() * len);
    let mut seq_ids = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &ds.samples[i];
        assert_eq!(s.bits.len(), len, "ragged dataset");
        ids.extend(s.bits.iter().map(|&b| b as usize));
        labels.extend(s.labels().iter().map(|&y| y as usize));
        seq_ids.push(id_base + i as u64);
    }
    Batch { tokens: TokenBatch::new(ids, indices.len(), len, seq_ids), labels }
}

/// Mean NLL over all positions plus the correct-argmax count.
pub fn nll_and_hits<T: Element>(logits: &Tensor<T>, labels: &[usize]) -> (Tensor<T>, usize) {
    let shape = logits.shape();
    assert_eq!(shape.len(), 3, "logits must be [b, t, vocab]");
    let (b, t, vocab) = (shape[0], shape[1], shape[2]);
    assert_eq!(labels.len(), b * t, "one label per position");
    let flat = reshape(logits, &[b * t, vocab]);
    let logp = log_softmax_last(&flat);
    let one_hot = Tensor::<T>::from_fn(&[b * t, vocab], |i| {
        if labels[i / vocab] == i % vocab { T::ONE } else { T::ZERO }
    });
    let picked = sum_axis(&mul(&logp, &one_hot), 1); // [b·t, 1]
    let nll = scale(&sum_all(&picked), T::from_f64(-1.0 / (b * t) as f64));
    let hits = argmax_last(&flat).iter().zip(labels).filter(|(a, l)| *a == *l).count();
    (nll, hits)
}

/// Scalar objective with its components, still attached to the graph.
pub struct LossParts<T: Element> {
    pub total: Tensor<T>,
    /// Mean prediction NLL (detached value).
    pub pred: f64,
    /// Mean per-position energy at h* (detached value; 0 for standard).
    pub energy: f64,
    pub hits: usize,
    pub tokens: usize,
    pub traces: Vec<SolverTrace>,
    /// Refined pre-norm rows in plan order (equilibrium variant only).
    pub h_star: Option<Tensor<T>>,
}

/// total = mean NLL + β · mean L(h*); the standard variant is the β = 0,
/// K = 0 degenerate case evaluated on its own cheaper path.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<T: Element>(
    params: &Params<T>,
    arch: &ArchConfig,
    variant: Variant,
    batch: &Batch,
    ec: &EqtConfig,
    beta_energy: f64,
    epoch: usize,
    root_seed: u64,
    memory: Option<&MemoryBuffer>,
) -> LossParts<T> {
    let tokens = batch.labels.len();
    match variant {
        Variant::Standard => {
            let logits = standard_logits(params, arch, &batch.tokens);
            let (nll, hits) = nll_and_hits(&logits, &batch.labels);
            LossParts {
                pred: nll.data()[0].to_f64(),
                total: nll,
                energy: 0.0,
                hits,
                tokens,
                traces: Vec::new(),
                h_star: None,
            }
        }
        Variant::Eqt => {
            let want_beta = beta_energy > 0.0;
            let out = eqt_forward(params, arch, &batch.tokens, ec, epoch, root_seed, memory, want_beta);
            let (nll, hits) = nll_and_hits(&out.logits, &batch.labels);
            let pred = nll.data()[0].to_f64();
            let rows = out.layout.rows() as f64;
            let (total, energy) = match out.beta_energy {
                Some(ev) => {
                    let mean_energy = scale(&ev.total, T::from_f64(1.0 / rows));
                    let energy = mean_energy.data()[0].to_f64();
                    (add(&nll, &scale(&mean_energy, T::from_f64(beta_energy))), energy)
                }
                None => {
                    // Report the solver's initial energies even when β = 0.
                    let energy = out.energy_initial.iter().sum::<f64>() / rows;
                    (nll, energy)
                }
            };
            LossParts {
                total,
                pred,
                energy,
                hits,
                tokens,
                traces: out.traces,
                h_star: Some(out.h_star_rows.clone()),
            }
        }
    }
}
