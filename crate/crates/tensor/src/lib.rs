//! Reverse-mode autodiff on dense row-major tensors.
//!
//! Built for iterative-refinement inference workloads: define-by-run graphs,
//! cheap handles, batched matrix kernels, and backward passes that can
//! themselves be differentiated (`create_graph`) for unrolled second-order
//! training. Generic over `f32` (working precision) and `f64` (shadow
//! precision for gradient checks).
//!
//! Conventions:
//! - broadcast follows the trailing-dimension rule only;
//! - op shape mismatches panic with both shapes named;
//! - gradients are returned in a [`GradStore`], nodes stay immutable;
//! - in-place mutation of tensors participating in a live graph is
//!   unsupported by construction (buffers are shared read-only).

mod backward;
mod element;
mod error;
mod grad_check;
mod matmul;
pub mod ops;
mod op;
mod tensor;

pub use backward::{backward, GradStore};
pub use element::Element;
pub use error::TensorError;
pub use grad_check::{grad_check, GradCheckConfig, GradCheckFailure, GradCheckReport};
pub use matmul::{bmm_nn, bmm_nt, bmm_tn, matmul_nn, matmul_nt, matmul_tn};
pub use ops::{
    add, add_const, argmax_last, broadcast_shape, broadcast_to, concat, div, exp, gelu,
    index_add, index_select, layer_norm, ln, log_softmax_last, logsumexp_last,
    max_last_detached, mean_all, mean_axis, mul, neg, pad_zeros, permute, powi, relu, reshape,
    scale, slice, softmax_last, sqrt, sub, sum_all, sum_axis, sum_squares, sum_to_shape, tanh,
    transpose,
};
pub use tensor::{grad_enabled, no_grad, with_grad_enabled, Tensor};
