//! The energy-function interface the solver minimizes, plus the synthetic
//! quadratic used by convergence probes and oracles.

use eqt_tensor::{matmul_nn, mul, ops, sub, sum_all, sum_axis, Element, Tensor};

/// One evaluation of an energy over a batch of refinement states.
pub struct EnergyEval<T: Element> {
    /// Scalar total (sum over rows), graph-connected to `h` and any
    /// parameters; drives both the inner gradient and training terms.
    pub total: Tensor<T>,
    /// Per-row values for stopping rules and traces.
    pub per_row: Vec<f64>,
}

impl<T: Element> EnergyEval<T> {
    /// Build from a `[rows, 1]` per-row energy tensor.
    pub fn from_rows(rows: Tensor<T>) -> Self {
        let per_row = rows.data().iter().map(|v| v.to_f64()).collect();
        EnergyEval { total: sum_all(&rows), per_row }
    }
}

/// A differentiable energy L(h) over row-batched states h: [rows, d].
pub trait EnergyFn<T: Element> {
    fn energy(&self, h: &Tensor<T>) -> EnergyEval<T>;
}

/// Quadratic energy L(h) = ½ (h−c)ᵀ A (h−c) with A = Q diag(λ) Qᵀ.
///
/// Built directly from its eigendecomposition so minimizers and iteration
/// behavior have closed forms: the proximal fixed point for proposal f is
/// h* = c + Q diag(1/(γλᵢ+1)) Qᵀ (f − c).
pub struct QuadraticEnergy<T: Element> {
    /// Orthogonal eigenbasis, columns are eigenvectors: [d, d].
    pub q: Tensor<T>,
    /// Eigenvalues as a [1, d] row for broadcasting.
    pub lambda: Tensor<T>,
    /// Center c: [1, d].
    pub center: Tensor<T>,
}

impl<T: Element> QuadraticEnergy<T> {
    pub fn new(q: Tensor<T>, eigenvalues: &[f64], center: Tensor<T>) -> Self {
        let d = q.shape()[0];
        assert_eq!(q.shape(), &[d, d], "eigenbasis must be square");
        assert_eq!(eigenvalues.len(), d, "need one eigenvalue per dimension");
        assert_eq!(center.shape(), &[1, d], "center must be [1, d]");
        let lambda = Tensor::from_vec(
            &[1, d],
            eigenvalues.iter().map(|&v| T::from_f64(v)).collect(),
        )
        .expect("eigenvalue row");
        QuadraticEnergy { q, lambda, center: center.detach() }
    }

    /// Axis-aligned quadratic (Q = I).
    pub fn axis_aligned(eigenvalues: &[f64], center: Tensor<T>) -> Self {
        let d = eigenvalues.len();
        let q = Tensor::from_fn(&[d, d], |i| if i / d == i % d { T::ONE } else { T::ZERO });
        QuadraticEnergy::new(q, eigenvalues, center)
    }

    /// Closed-form proximal equilibrium h* for proposal rows f: [R, d].
    pub fn closed_form_minimizer(&self, f: &Tensor<T>, gamma: f64) -> Tensor<T> {
        eqt_tensor::no_grad(|| {
            let diff = sub(f, &self.center);
            let u = matmul_nn(&diff, &self.q); // eigen coordinates
            let d = self.lambda.numel();
            let shrink = Tensor::from_vec(
                &[1, d],
                self.lambda
                    .data()
                    .iter()
                    .map(|&l| T::from_f64(1.0 / (gamma * l.to_f64() + 1.0)))
                    .collect(),
            )
            .expect("shrink row");
            let u_star = mul(&u, &shrink);
            ops::add(&matmul_nn(&u_star, &eqt_tensor::transpose(&self.q)), &self.center)
        })
    }
}

impl<T: Element> EnergyFn<T> for QuadraticEnergy<T> {
    fn energy(&self, h: &Tensor<T>) -> EnergyEval<T> {
        let diff = sub(h, &self.center);
        let u = matmul_nn(&diff, &self.q);
        let weighted = mul(&mul(&u, &u), &self.lambda);
        let rows = ops::scale(&sum_axis(&weighted, 1), T::from_f64(0.5));
        EnergyEval::from_rows(rows)
    }
}
