//! Finite-difference verification of analytic gradients.
//!
//! Central differences around a point, compared coordinate-by-coordinate
//! against the gradient from `backward`. Works at any `Element` precision;
//! the recommended regime is f64 ("shadow mode") with step 1e-5, or f32
//! with step 1e-3 and a correspondingly looser tolerance.

use crate::backward::backward;
use crate::element::Element;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error per coordinate.
    pub tol: f64,
}

impl GradCheckConfig {
    /// f64 shadow-mode settings.
    pub fn shadow() -> Self {
        GradCheckConfig { step: 1e-5, tol: 1e-4 }
    }

    /// Direct f32 settings.
    pub fn single() -> Self {
        GradCheckConfig { step: 1e-3, tol: 1e-2 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckFailure {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub ok: bool,
    pub n_checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub failures: Vec<GradCheckFailure>,
}

/// Relative error with a unit floor, so tiny gradients compare absolutely.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1.0)
}

/// Check d(f)/d(point) against central differences.
///
/// `f` must map a tensor of `point`'s shape to a scalar and be deterministic
/// (any internal sampling must be frozen). Non-finite analytic or numeric
/// values are reported as failures, never masked.
pub fn grad_check<T: Element>(
    f: impl Fn(&Tensor<T>) -> Tensor<T>,
    point: &Tensor<T>,
    cfg: GradCheckConfig,
) -> GradCheckReport {
    let x = point.detach_as_leaf();
    let loss = f(&x);
    assert_eq!(loss.numel(), 1, "grad_check: f must return a scalar");
    let store = backward(&loss, false).expect("scalar loss");
    let analytic = store.get_or_zeros(&x);
    let ga = analytic.data();

    let base = point.to_vec();
    let h = cfg.step;
    let mut failures = Vec::new();
    let mut max_rel = 0.0f64;
    let mut worst = 0usize;

    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] = T::from_f64(plus[i].to_f64() + h);
        let mut minus = base.clone();
        minus[i] = T::from_f64(minus[i].to_f64() - h);
        // Probe points are plain constants, so no graph is recorded for
        // ordinary functions; functions that differentiate internally
        // (e.g. gradient-norm objectives) still get their own graphs.
        let fp = f(&Tensor::from_vec(point.shape(), plus).expect("shape")).item();
        let fm = f(&Tensor::from_vec(point.shape(), minus).expect("shape")).item();
        let numeric = (fp.to_f64() - fm.to_f64()) / (2.0 * h);
        let a = ga[i].to_f64();
        let err = rel_err(a, numeric);
        let finite = a.is_finite() && numeric.is_finite();
        if err > max_rel || !finite {
            max_rel = if finite { err } else { f64::INFINITY };
            worst = i;
        }
        if err > cfg.tol || !finite {
            failures.push(GradCheckFailure { index: i, analytic: a, numeric, rel_err: err });
        }
    }

    GradCheckReport {
        ok: failures.is_empty(),
        n_checked: base.len(),
        max_rel_err: max_rel,
        worst_index: worst,
        failures,
    }
}
