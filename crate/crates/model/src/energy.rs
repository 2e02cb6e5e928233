//! Composite self-supervised energy over refined states.
//!
//! A `PositionEnergy` binds parameters, context tokens, and per-position
//! window/mask plans so the solver can evaluate L(h) on a whole batch of
//! position rows at once. Positions are grouped by (window length, mask
//! count); within a group all rows share tensor shapes, so each term is a
//! single batched graph. The confidence and memory terms have no
//! per-position structure and run over all rows in one call.

use std::rc::Rc;

use eqt_tensor::ops::{
    add, concat, exp, index_add, index_select, mul, reshape, scale, slice, sum_axis,
};
use eqt_tensor::{Element, Tensor};
use eqt_solver::{refine, EnergyEval, EnergyFn, GradFlow, SolverConfig, SolverTrace};
use rand::Rng;

use crate::config::{ArchConfig, TokenBatch};
use crate::memory::{energy_mem_rows, MemoryBuffer};
use crate::params::Params;
use crate::pe::pe_rows;
use crate::rng::substream;
use crate::transformer::{
    final_norm, forward_proposal_stack, lm_logits, mask_head_nll, reverse_window_nll,
};

// ── weights ──

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWeights {
    pub rev: f64,
    pub mask: f64,
    pub conf: f64,
    pub mem: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights { rev: 1.0, mask: 0.5, conf: 0.2, mem: 0.1 }
    }
}

impl EnergyWeights {
    /// Parity runs disable the memory term.
    pub fn parity() -> Self {
        EnergyWeights { mem: 0.0, ..EnergyWeights::default() }
    }

    pub fn zero() -> Self {
        EnergyWeights { rev: 0.0, mask: 0.0, conf: 0.0, mem: 0.0 }
    }

    pub fn validate(&self) {
        assert!(
            self.rev >= 0.0 && self.mask >= 0.0 && self.conf >= 0.0 && self.mem >= 0.0,
            "energy weights must be nonnegative"
        );
    }

    pub fn all_zero(&self) -> bool {
        self.rev == 0.0 && self.mask == 0.0 && self.conf == 0.0 && self.mem == 0.0
    }
}

/// Scalar per-term means with the weighted total.
#[derive(Debug, Clone, Copy)]
pub struct EnergyBreakdown {
    pub rev: f64,
    pub mask: f64,
    pub conf: f64,
    pub mem: f64,
    pub total: f64,
    pub weights: EnergyWeights,
}

// ── confidence term ──

/// Entropy plus NLL of the argmax class under the tied LM head, per row.
pub fn energy_conf_rows<T: Element>(p: &Params<T>, h_rows: &Tensor<T>) -> Tensor<T> {
    let g = h_rows.shape()[0];
    let logits = lm_logits(p, h_rows); // [g, vocab]
    let vocab = logits.shape()[1];
    let logp = eqt_tensor::ops::log_softmax_last(&logits);
    let probs = exp(&logp);
    let entropy = scale(&sum_axis(&mul(&probs, &logp), 1), T::from_f64(-1.0)); // [g, 1]
    let top = eqt_tensor::ops::argmax_last(&logits);
    let one_hot = Tensor::<T>::from_fn(&[g, vocab], |flat| {
        if top[flat / vocab] == flat % vocab { T::ONE } else { T::ZERO }
    });
    let nll = scale(&sum_axis(&mul(&logp, &one_hot), 1), T::from_f64(-1.0)); // [g, 1]
    add(&entropy, &nll)
}

// ── mask planning ──

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Number of masked positions for a context of `t` tokens.
pub fn mask_count(t: usize) -> usize {
    round_half_up(0.15 * t as f64).max(1)
}

/// Deterministic mask draw for (sequence, position, epoch): 0-based indices
/// from {0 .. p−1}, never the current position p (except the degenerate
/// p = 0 context, which only has itself).
pub fn mask_positions(root_seed: u64, seq_id: u64, p: usize, epoch: usize) -> Vec<usize> {
    if p == 0 {
        return vec![0];
    }
    let want = mask_count(p + 1).min(p);
    let mut pool: Vec<usize> = (0..p).collect();
    let mut rng = substream(root_seed, "mask.draw", seq_id, ((epoch as u64) << 32) | p as u64);
    // Partial Fisher–Yates: the first `want` slots become the draw.
    for i in 0..want {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut out = pool[..want].to_vec();
    out.sort_unstable();
    out
}

// ── position grouping ──

/// Rows of one (window length, mask count) group, batch-wide.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    /// Reverse-window length shared by the group.
    pub s: usize,
    /// Mask count shared by the group.
    pub m: usize,
    /// First row index of the group in plan order.
    pub start: usize,
    pub count: usize,
    /// Window token ids, [count·s] in row order.
    pub window_ids: Vec<usize>,
    /// Masked position indices, [count·m] in row order.
    pub mask_pe_idx: Vec<usize>,
    /// True token at each masked position, [count·m].
    pub mask_targets: Vec<usize>,
}

/// Grouped layout of every (sequence, position) pair of a batch.
#[derive(Debug, Clone)]
pub struct PlanLayout {
    pub groups: Vec<GroupSpec>,
    /// perm[row] = b·len + p: where the row lives in the flat state tensor.
    pub perm: Vec<usize>,
    pub batch: usize,
    pub len: usize,
}

impl PlanLayout {
    pub fn rows(&self) -> usize {
        self.perm.len()
    }

    /// Group positions of a batch by (window length, mask count) and
    /// precompute every term's token data. Deterministic in all inputs.
    pub fn build(tokens: &TokenBatch, window: usize, epoch: usize, root_seed: u64) -> PlanLayout {
        assert!(window >= 1, "reverse window must be ≥ 1");
        let (bsz, len) = (tokens.batch, tokens.len);
        // Key positions by (s, m); position keys are batch-independent.
        let mut keyed: Vec<(usize, usize, usize)> = (0..len)
            .map(|p| (window.min(p + 1), mask_count(p + 1).min(p.max(1)), p))
            .collect();
        keyed.sort_unstable();

        let mut groups: Vec<GroupSpec> = Vec::new();
        let mut perm = Vec::with_capacity(bsz * len);
        let mut row = 0usize;
        let mut i = 0;
        while i < keyed.len() {
            let (s, m, _) = keyed[i];
            let mut positions = Vec::new();
            while i < keyed.len() && keyed[i].0 == s && keyed[i].1 == m {
                positions.push(keyed[i].2);
                i += 1;
            }
            let count = positions.len() * bsz;
            let mut window_ids = Vec::with_capacity(count * s);
            let mut mask_pe_idx = Vec::with_capacity(count * m);
            let mut mask_targets = Vec::with_capacity(count * m);
            for &p in &positions {
                for b in 0..bsz {
                    let seq = tokens.row(b);
                    window_ids.extend_from_slice(&seq[p + 1 - s..p + 1]);
                    let masked = mask_positions(root_seed, tokens.seq_ids[b], p, epoch);
                    assert_eq!(masked.len(), m, "mask plan drift at p={p}");
                    for &mp in &masked {
                        mask_pe_idx.push(mp);
                        mask_targets.push(seq[mp]);
                    }
                    perm.push(b * len + p);
                }
            }
            groups.push(GroupSpec {
                s,
                m,
                start: row,
                count,
                window_ids,
                mask_pe_idx,
                mask_targets,
            });
            row += count;
        }
        PlanLayout { groups, perm, batch: bsz, len }
    }
}

// ── the bound energy ──

struct MemTerm<T: Element> {
    z: Tensor<T>,
    relevance: Tensor<T>,
    tau: f64,
}

/// L(h) for a fixed plan: parameters + context baked in, h free.
pub struct PositionEnergy<T: Element> {
    params: Params<T>,
    cfg: ArchConfig,
    weights: EnergyWeights,
    layout: Rc<PlanLayout>,
    mem: Option<MemTerm<T>>,
}

/// Cosine-retrieval fan-in for the memory term.
pub const MEMORY_TOP_K: usize = 4;

impl<T: Element> PositionEnergy<T> {
    /// `detach_params` severs parameter gradients (used inside the solver
    /// loop so per-iteration backwards stay cheap); the training objective
    /// evaluates a second, attached instance at h*.
    pub fn new(
        params: &Params<T>,
        cfg: &ArchConfig,
        weights: EnergyWeights,
        layout: Rc<PlanLayout>,
        memory: Option<&MemoryBuffer>,
        proposal_rows: Option<&Tensor<T>>,
        detach_params: bool,
    ) -> Self {
        weights.validate();
        let mem = if weights.mem > 0.0 {
            let buf = memory.expect("λ_mem > 0 requires a memory buffer");
            let rows = layout.rows();
            let f = proposal_rows.expect("λ_mem > 0 requires proposal rows for retrieval");
            assert_eq!(f.shape()[0], rows, "proposal rows must match plan rows");
            let d = f.shape()[1];
            let mut flags = Vec::with_capacity(rows * buf.len());
            let fdata = f.data();
            for r in 0..rows {
                let row: Vec<f32> =
                    fdata[r * d..(r + 1) * d].iter().map(|v| v.to_f64() as f32).collect();
                let rel = buf.retrieve(&row, MEMORY_TOP_K);
                flags.extend(rel.iter().map(|&b| if b { T::ONE } else { T::ZERO }));
            }
            Some(MemTerm {
                z: buf.z.cast::<T>(),
                relevance: Tensor::from_vec(&[rows, buf.len()], flags).expect("sized flags"),
                tau: buf.tau,
            })
        } else {
            None
        };
        PositionEnergy {
            params: if detach_params { params.detached() } else { params.clone() },
            cfg: cfg.clone(),
            weights,
            layout,
            mem,
        }
    }

    pub fn layout(&self) -> &PlanLayout {
        &self.layout
    }

    /// Unweighted per-term row values; zero-weight terms are skipped and
    /// reported as zero rows.
    fn term_rows(&self, h: &Tensor<T>) -> [Option<Tensor<T>>; 4] {
        let rows = self.layout.rows();
        assert_eq!(h.shape(), &[rows, self.cfg.d_model], "energy rows shape mismatch");
        let mut rev_parts: Vec<Tensor<T>> = Vec::new();
        let mut mask_parts: Vec<Tensor<T>> = Vec::new();
        for gspec in &self.layout.groups {
            let hg = slice(h, 0, gspec.start, gspec.count);
            if self.weights.rev > 0.0 {
                rev_parts.push(reverse_window_nll(
                    &self.params,
                    &self.cfg,
                    &hg,
                    &gspec.window_ids,
                    gspec.s,
                ));
            }
            if self.weights.mask > 0.0 {
                let pe = pe_rows::<T>(&gspec.mask_pe_idx, self.cfg.max_seq_len, self.cfg.d_model);
                mask_parts.push(mask_head_nll(
                    &self.params,
                    &self.cfg,
                    &hg,
                    &pe,
                    &gspec.mask_targets,
                    gspec.m,
                ));
            }
        }
        let cat = |parts: Vec<Tensor<T>>| -> Option<Tensor<T>> {
            if parts.is_empty() {
                return None;
            }
            let refs: Vec<&Tensor<T>> = parts.iter().collect();
            Some(concat(&refs, 0))
        };
        let rev = cat(rev_parts);
        let mask = cat(mask_parts);
        let conf = (self.weights.conf > 0.0).then(|| energy_conf_rows(&self.params, h));
        let mem = self
            .mem
            .as_ref()
            .map(|mt| energy_mem_rows(h, &mt.z, &mt.relevance, mt.tau));
        [rev, mask, conf, mem]
    }

    /// Scalar means per term with the weighted total (diagnostics).
    pub fn breakdown(&self, h: &Tensor<T>) -> EnergyBreakdown {
        let [rev, mask, conf, mem] = self.term_rows(h);
        let mean = |t: &Option<Tensor<T>>| -> f64 {
            t.as_ref()
                .map(|v| v.data().iter().map(|x| x.to_f64()).sum::<f64>() / v.numel() as f64)
                .unwrap_or(0.0)
        };
        let (r, k, c, m) = (mean(&rev), mean(&mask), mean(&conf), mean(&mem));
        let w = self.weights;
        EnergyBreakdown {
            rev: r,
            mask: k,
            conf: c,
            mem: m,
            total: w.rev * r + w.mask * k + w.conf * c + w.mem * m,
            weights: w,
        }
    }
}

impl<T: Element> EnergyFn<T> for PositionEnergy<T> {
    fn energy(&self, h: &Tensor<T>) -> EnergyEval<T> {
        let rows = self.layout.rows();
        let [rev, mask, conf, mem] = self.term_rows(h);
        let mut acc: Option<Tensor<T>> = None;
        let mut push = |t: Option<Tensor<T>>, w: f64| {
            if let Some(v) = t {
                let scaled = scale(&v, T::from_f64(w));
                acc = Some(match acc.take() {
                    Some(a) => add(&a, &scaled),
                    None => scaled,
                });
            }
        };
        push(rev, self.weights.rev);
        push(mask, self.weights.mask);
        push(conf, self.weights.conf);
        push(mem, self.weights.mem);
        let rows_t = acc.unwrap_or_else(|| Tensor::zeros(&[rows, 1]));
        EnergyEval::from_rows(rows_t)
    }
}

// ── the full equilibrium forward pass ──

#[derive(Debug, Clone)]
pub struct EqtConfig {
    pub weights: EnergyWeights,
    pub solver: SolverConfig,
    /// Reverse-prediction window length W.
    pub window: usize,
    pub flow: GradFlow,
}

pub struct EqtOutput<T: Element> {
    /// [b, t, vocab] after refinement, final norm, and the LM head.
    pub logits: Tensor<T>,
    /// Proposal rows f in plan order, [rows, d].
    pub f_rows: Tensor<T>,
    /// Refined pre-norm rows h* in plan order, [rows, d].
    pub h_star_rows: Tensor<T>,
    /// Attached-parameter energy at h* (for the training objective).
    pub beta_energy: Option<EnergyEval<T>>,
    pub traces: Vec<SolverTrace>,
    pub energy_initial: Vec<f64>,
    pub energy_final: Option<Vec<f64>>,
    pub layout: Rc<PlanLayout>,
}

/// Proposal stack → per-position refinement → final norm → LM head.
#[allow(clippy::too_many_arguments)]
pub fn eqt_forward<T: Element>(
    p: &Params<T>,
    cfg: &ArchConfig,
    tokens: &TokenBatch,
    ec: &EqtConfig,
    epoch: usize,
    root_seed: u64,
    memory: Option<&MemoryBuffer>,
    want_beta_energy: bool,
) -> EqtOutput<T> {
    let f_full = forward_proposal_stack(p, cfg, tokens);
    let (bsz, len, d) = (tokens.batch, tokens.len, cfg.d_model);
    let f_flat = reshape(&f_full, &[bsz * len, d]);
    let layout = Rc::new(PlanLayout::build(tokens, ec.window, epoch, root_seed));
    let idx = Rc::new(layout.perm.clone());
    let f_rows = index_select(&f_flat, &idx);

    let detach_inner = ec.flow != GradFlow::ExactUnroll;
    let inner = PositionEnergy::new(
        p,
        cfg,
        ec.weights,
        Rc::clone(&layout),
        memory,
        Some(&f_rows),
        detach_inner,
    );
    let res = refine(&f_rows, &inner, &ec.solver, ec.flow, None);
    let h_rows = res.h_star.clone();

    let beta_energy = want_beta_energy.then(|| {
        let attached = PositionEnergy::new(
            p,
            cfg,
            ec.weights,
            Rc::clone(&layout),
            memory,
            Some(&f_rows),
            false,
        );
        attached.energy(&h_rows)
    });

    let h_flat = index_add(bsz * len, &h_rows, &idx);
    let h_full = reshape(&h_flat, &[bsz, len, d]);
    let logits = lm_logits(p, &final_norm(p, &h_full));

    EqtOutput {
        logits,
        f_rows,
        h_star_rows: res.h_pre_norm,
        beta_energy,
        traces: res.traces,
        energy_initial: res.energy_initial,
        energy_final: res.energy_final,
        layout,
    }
}
