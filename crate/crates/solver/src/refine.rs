//! The proximal-gradient refinement loop (the inference-time inner solver).
//!
//! Starting from the proposal h⁰ = f, each iteration takes
//!     h ← h − α·(∇L(h) + (h − f)/γ)
//! over a row batch [R, d]; rows stop independently according to the
//! configured rule and frozen rows are masked out of later updates. The
//! final layer norm (when a finisher is supplied) is applied once after the
//! loop, never inside it. All arithmetic is ordinary tensor ops, so with
//! `GradFlow::DetachedInner`/`ExactUnroll` the returned state stays
//! differentiable w.r.t. `f` (and, for exact unrolling, parameters).
//!
//! Energy implementations should capture parameters *detached* except under
//! `ExactUnroll`: the inner backward only ever needs ∇ w.r.t. h, and frozen
//! parameters keep per-iteration sweeps cheap.

use eqt_tensor::{backward, mul, ops, sub, with_grad_enabled, Element, Tensor};

use crate::config::{GradFlow, SolverConfig, StopCause, StopMode};
use crate::energy::{EnergyEval, EnergyFn};

/// One iteration's measurements for one row.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    /// Proximal objective Φ = L(h) + ‖h − f‖²/(2γ) after the update.
    pub phi: f64,
    /// Energy L(h) after the update.
    pub energy: f64,
    /// ‖∇L‖ used by the update.
    pub grad_energy_norm: f64,
    /// ‖(h − f)/γ‖ used by the update.
    pub grad_prox_norm: f64,
    /// ‖Δh‖ of the update.
    pub step_norm: f64,
}

/// Per-row account of one refinement run.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    /// One record per performed iteration (populated when `record_trace`).
    pub iters: Vec<IterRecord>,
    pub iterations_used: usize,
    pub stop_cause: StopCause,
    /// Successive step-norm ratios ‖Δh_k‖/‖Δh_{k−1}‖ (when `record_trace`).
    pub contraction_ratios: Vec<f64>,
}

pub struct RefineResult<T: Element> {
    /// Refined state after the finisher (identical to `h_pre_norm` if none).
    pub h_star: Tensor<T>,
    /// Refined state before the finisher; equilibrium lives here.
    pub h_pre_norm: Tensor<T>,
    pub traces: Vec<SolverTrace>,
    /// L(h⁰) per row (empty only when nothing required an initial eval).
    pub energy_initial: Vec<f64>,
    /// L at the returned state, when a final evaluation was performed.
    pub energy_final: Option<Vec<f64>>,
    /// Detached h after 0,1,…,k updates (when `snapshots`).
    pub snapshots: Option<Vec<Tensor<T>>>,
}

fn row_norms<T: Element>(t: &Tensor<T>, rows: usize) -> Vec<f64> {
    let d = t.numel() / rows;
    t.data()
        .chunks_exact(d)
        .map(|row| row.iter().map(|v| v.to_f64() * v.to_f64()).sum::<f64>().sqrt())
        .collect()
}

fn col_mask<T: Element>(active: &[bool]) -> Tensor<T> {
    Tensor::from_fn(&[active.len(), 1], |i| if active[i] { T::ONE } else { T::ZERO })
}

/// Gradient of the energy at the current state, per the flow mode.
///
/// The inner gradient is part of the *forward* computation of the refined
/// state, so recording is forced on locally: an ambient `no_grad` (the
/// normal inference mode) must not silently zero the update direction.
fn energy_grad_at<T: Element, E: EnergyFn<T>>(
    energy: &E,
    h: &Tensor<T>,
    flow: GradFlow,
) -> (EnergyEval<T>, Tensor<T>) {
    match flow {
        GradFlow::None | GradFlow::DetachedInner => with_grad_enabled(true, || {
            let leaf = h.detach_as_leaf();
            let eval = energy.energy(&leaf);
            let g = backward(&eval.total, false)
                .expect("scalar energy")
                .get_or_zeros(&leaf)
                .detach();
            (eval, g)
        }),
        GradFlow::ExactUnroll => with_grad_enabled(true, || {
            let eval = energy.energy(h);
            let g = backward(&eval.total, true).expect("scalar energy").get_or_zeros(h);
            (eval, g)
        }),
    }
}

/// Run the proximal refinement from proposal rows `f`: [R, d].
pub fn refine<T: Element, E: EnergyFn<T>>(
    f: &Tensor<T>,
    energy: &E,
    cfg: &SolverConfig,
    flow: GradFlow,
    finisher: Option<&dyn Fn(&Tensor<T>) -> Tensor<T>>,
) -> RefineResult<T> {
    cfg.validate();
    assert_eq!(f.rank(), 2, "refine expects [rows, d], got {:?}", f.shape());
    let rows = f.shape()[0];
    let alpha = T::from_f64(cfg.alpha);
    let inv_gamma = T::from_f64(1.0 / cfg.gamma);
    // Adaptive stopping and divergence detection read post-update energies,
    // so they force the trailing evaluation on.
    let final_energy =
        cfg.final_energy || cfg.mode == StopMode::Adaptive || cfg.record_trace;

    // In inference flow the chain must not attach to f's graph.
    let f_base = if flow == GradFlow::None { f.detach() } else { f.clone() };
    let mut h = f_base.clone();

    let mut active = vec![true; rows];
    let mut cause: Vec<Option<StopCause>> = vec![None; rows];
    let mut iters_used = vec![0usize; rows];
    let mut phi_prev = vec![f64::INFINITY; rows];
    let mut incr_count = vec![0u8; rows];
    let mut iter_rows: Vec<Vec<IterRecord>> = vec![Vec::new(); rows];
    let mut prev_step: Vec<f64> = vec![f64::NAN; rows];
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); rows];
    let mut snaps: Option<Vec<Tensor<T>>> =
        if cfg.snapshots { Some(vec![h.detach()]) } else { None };

    let need_init = cfg.k_max > 0 || final_energy;
    let mut eval_grad: Option<(EnergyEval<T>, Tensor<T>)> =
        if need_init { Some(energy_grad_at(energy, &h, flow)) } else { None };
    let energy_initial: Vec<f64> =
        eval_grad.as_ref().map(|(e, _)| e.per_row.clone()).unwrap_or_default();

    // Adaptive init check: rows already below τ never iterate.
    if cfg.mode == StopMode::Adaptive {
        let tau = cfg.tau_energy.expect("validated");
        for r in 0..rows {
            if energy_initial[r] < tau {
                active[r] = false;
                cause[r] = Some(StopCause::EnergyBelowTau);
            }
        }
        // Initial Φ for divergence tracking.
        for r in 0..rows {
            phi_prev[r] = energy_initial[r];
        }
    } else if need_init {
        for r in 0..rows {
            phi_prev[r] = energy_initial[r];
        }
    }

    for k in 1..=cfg.k_max {
        if !active.iter().any(|&a| a) {
            break;
        }
        let (_, g) = eval_grad.take().expect("loop precondition: eval present");

        // delta = ∇L + (h − f)/γ, masked to active rows.
        let prox = ops::scale(&sub(&h, &f_base), inv_gamma);
        let delta = ops::add(&g, &prox);
        let all_active = active.iter().all(|&a| a);
        let masked = if all_active { delta.clone() } else { mul(&delta, &col_mask(&active)) };
        let step = ops::scale(&masked, alpha);
        let mut h_next = sub(&h, &step);

        // Per-row norms for records and stopping.
        let g_norms = row_norms(&g, rows);
        let prox_norms = row_norms(&prox, rows);
        let step_norms = row_norms(&step, rows);
        let h_norms = row_norms(&h, rows);

        let was_active = active.clone();

        // Non-finite rows revert to their previous iterate and freeze.
        let d = h_next.numel() / rows;
        let bad: Vec<bool> = h_next
            .data()
            .chunks_exact(d)
            .map(|row| row.iter().any(|v| !v.is_finite()))
            .collect();
        if bad.iter().any(|&b| b) {
            // Re-assemble row-by-row: masking arithmetic would turn the
            // non-finite entries into NaN (inf·0), so take clean slices.
            let parts: Vec<Tensor<T>> = (0..rows)
                .map(|r| ops::slice(if bad[r] { &h } else { &h_next }, 0, r, 1))
                .collect();
            let refs: Vec<&Tensor<T>> = parts.iter().collect();
            h_next = ops::concat(&refs, 0);
            for r in 0..rows {
                if bad[r] && active[r] {
                    active[r] = false;
                    cause[r] = Some(StopCause::NonFinite);
                }
            }
        }
        h = h_next;
        for r in 0..rows {
            if was_active[r] {
                iters_used[r] = k;
            }
        }
        if let Some(s) = snaps.as_mut() {
            s.push(h.detach());
        }

        // Evaluate at the new state when the next iteration (or the caller)
        // needs it; stopping rules that read energy live behind this too.
        let want_eval = k < cfg.k_max || final_energy;
        if want_eval {
            eval_grad = Some(energy_grad_at(energy, &h, flow));
        }
        let post_energy: Option<&Vec<f64>> = eval_grad.as_ref().map(|(e, _)| &e.per_row);

        for r in 0..rows {
            if !was_active[r] {
                continue;
            }
            let energy_r = post_energy.map(|e| e[r]).unwrap_or(f64::NAN);
            let dist = {
                // ‖h − f‖ for the proximal part of Φ.
                let hr = &h.data()[r * d..(r + 1) * d];
                let fr = &f_base.data()[r * d..(r + 1) * d];
                hr.iter()
                    .zip(fr)
                    .map(|(a, b)| (a.to_f64() - b.to_f64()).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let phi = energy_r + dist * dist / (2.0 * cfg.gamma);
            if cfg.record_trace {
                iter_rows[r].push(IterRecord {
                    phi,
                    energy: energy_r,
                    grad_energy_norm: g_norms[r],
                    grad_prox_norm: prox_norms[r],
                    step_norm: step_norms[r],
                });
                if prev_step[r].is_finite() && prev_step[r] > 0.0 {
                    ratios[r].push(step_norms[r] / prev_step[r]);
                }
                prev_step[r] = step_norms[r];
            }
            if !active[r] {
                continue; // non-finite row: record then stay frozen
            }
            // Stopping rules.
            match cfg.mode {
                StopMode::FixedK => {}
                StopMode::EarlyStop => {
                    let rel = step_norms[r] / h_norms[r].max(1.0);
                    if rel <= cfg.eps_stop {
                        active[r] = false;
                        cause[r] = Some(StopCause::StepSmall);
                    }
                }
                StopMode::Adaptive => {
                    let tau = cfg.tau_energy.expect("validated");
                    if energy_r < tau {
                        active[r] = false;
                        cause[r] = Some(StopCause::EnergyBelowTau);
                    }
                }
            }
            // Divergence guard: Φ rising five consecutive iterations.
            if active[r] && post_energy.is_some() {
                if phi > phi_prev[r] + 1e-12 * phi_prev[r].abs().max(1.0) {
                    incr_count[r] += 1;
                    if incr_count[r] >= 5 {
                        active[r] = false;
                        cause[r] = Some(StopCause::Diverged);
                    }
                } else {
                    incr_count[r] = 0;
                }
                phi_prev[r] = phi;
            }
        }
    }

    let energy_final = if final_energy && cfg.k_max > 0 {
        eval_grad.as_ref().map(|(e, _)| e.per_row.clone())
    } else if final_energy {
        Some(energy_initial.clone())
    } else {
        None
    };

    let traces: Vec<SolverTrace> = (0..rows)
        .map(|r| SolverTrace {
            iters: std::mem::take(&mut iter_rows[r]),
            iterations_used: iters_used[r],
            stop_cause: cause[r].unwrap_or(StopCause::Cap),
            contraction_ratios: std::mem::take(&mut ratios[r]),
        })
        .collect();

    let h_pre_norm = h.clone();
    let h_star = match finisher {
        Some(f) => f(&h),
        None => h,
    };
    RefineResult { h_star, h_pre_norm, traces, energy_initial, energy_final, snapshots: snaps }
}

/// Equilibrium residual ‖∇L(h) + (h − f)/γ‖ per row (stationarity of Φ).
pub fn equilibrium_residual<T: Element, E: EnergyFn<T>>(
    energy: &E,
    h: &Tensor<T>,
    f: &Tensor<T>,
    gamma: f64,
) -> Vec<f64> {
    assert_eq!(h.shape(), f.shape(), "certificate: state/proposal shapes differ");
    let rows = h.shape()[0];
    // Locally re-enable recording: certificates are usually taken inside
    // inference (`no_grad`) blocks.
    let g = with_grad_enabled(true, || {
        let leaf = h.detach_as_leaf();
        let eval = energy.energy(&leaf);
        backward(&eval.total, false).expect("scalar energy").get_or_zeros(&leaf)
    });
    let prox = ops::scale(&sub(&h.detach(), &f.detach()), T::from_f64(1.0 / gamma));
    row_norms(&ops::add(&g, &prox), rows)
}

/// Residuals plus pass/fail against tol·max(1, ‖f_row‖).
pub fn certify_equilibrium<T: Element, E: EnergyFn<T>>(
    energy: &E,
    h: &Tensor<T>,
    f: &Tensor<T>,
    gamma: f64,
    tol: f64,
) -> (Vec<f64>, Vec<bool>) {
    let residuals = equilibrium_residual(energy, h, f, gamma);
    let rows = f.shape()[0];
    let f_norms = row_norms(f, rows);
    let certified = residuals
        .iter()
        .zip(&f_norms)
        .map(|(&res, &fn_)| res <= tol * fn_.max(1.0))
        .collect();
    (residuals, certified)
}
