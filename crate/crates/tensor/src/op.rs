//! Recorded backward ops and their vector-Jacobian products.
//!
//! Every vjp is expressed through public tensor ops, so running backward
//! with graph recording enabled (`create_graph`) yields gradients that are
//! themselves differentiable — required by the exact-unroll training mode.
//!
//! Ops whose vjp depends on the forward *output* (exp, tanh, sqrt) cache the
//! output buffer for the fast path and recompute it through the graph when
//! recording is enabled, keeping second derivatives exact.

use std::rc::Rc;

use crate::element::Element;
use crate::ops;
use crate::tensor::{grad_enabled, Tensor};

pub(crate) enum BackOp<T: Element> {
    Add { a: Tensor<T>, b: Tensor<T> },
    Sub { a: Tensor<T>, b: Tensor<T> },
    Mul { a: Tensor<T>, b: Tensor<T> },
    Div { a: Tensor<T>, b: Tensor<T> },
    Neg { a: Tensor<T> },
    Scale { a: Tensor<T>, c: T },
    AddConst { a: Tensor<T> },
    Powi { a: Tensor<T>, n: i32 },
    Exp { a: Tensor<T>, y: Rc<Vec<T>> },
    Ln { a: Tensor<T> },
    Tanh { a: Tensor<T>, y: Rc<Vec<T>> },
    Sqrt { a: Tensor<T>, y: Rc<Vec<T>> },
    Relu { a: Tensor<T> },
    MatmulNN { a: Tensor<T>, b: Tensor<T> },
    MatmulNT { a: Tensor<T>, b: Tensor<T> },
    MatmulTN { a: Tensor<T>, b: Tensor<T> },
    BmmNN { a: Tensor<T>, b: Tensor<T> },
    BmmNT { a: Tensor<T>, b: Tensor<T> },
    BmmTN { a: Tensor<T>, b: Tensor<T> },
    Reshape { a: Tensor<T> },
    Permute { a: Tensor<T>, axes: Vec<usize> },
    Concat { parts: Vec<Tensor<T>>, axis: usize },
    Slice { a: Tensor<T>, axis: usize, start: usize, len: usize },
    PadZeros { a: Tensor<T>, axis: usize, before: usize },
    IndexSelect { a: Tensor<T>, indices: Rc<Vec<usize>> },
    IndexAdd { values: Tensor<T>, indices: Rc<Vec<usize>> },
    SumAll { a: Tensor<T> },
    SumAxis { a: Tensor<T> },
    SumToShape { a: Tensor<T> },
    BroadcastTo { a: Tensor<T> },
}

impl<T: Element> BackOp<T> {
    /// Parent handles in a fixed order (drives deterministic traversal).
    pub(crate) fn parents(&self) -> Vec<&Tensor<T>> {
        use BackOp::*;
        match self {
            Add { a, b } | Sub { a, b } | Mul { a, b } | Div { a, b } => vec![a, b],
            MatmulNN { a, b } | MatmulNT { a, b } | MatmulTN { a, b } => vec![a, b],
            BmmNN { a, b } | BmmNT { a, b } | BmmTN { a, b } => vec![a, b],
            Neg { a }
            | Scale { a, .. }
            | AddConst { a }
            | Powi { a, .. }
            | Exp { a, .. }
            | Ln { a }
            | Tanh { a, .. }
            | Sqrt { a, .. }
            | Relu { a }
            | Reshape { a }
            | Permute { a, .. }
            | Slice { a, .. }
            | PadZeros { a, .. }
            | IndexSelect { a, .. }
            | SumAll { a }
            | SumAxis { a }
            | SumToShape { a }
            | BroadcastTo { a } => vec![a],
            IndexAdd { values, .. } => vec![values],
            Concat { parts, .. } => parts.iter().collect(),
        }
    }

    /// Gradient contributions to each differentiable parent, given the
    /// output gradient `g`. Pairs are (parent, contribution).
    pub(crate) fn vjp(&self, g: &Tensor<T>) -> Vec<(Tensor<T>, Tensor<T>)> {
        use BackOp::*;
        let mut out: Vec<(Tensor<T>, Tensor<T>)> = Vec::with_capacity(2);
        let mut push = |p: &Tensor<T>, grad: Tensor<T>| {
            if p.requires_grad() {
                out.push((p.clone(), grad));
            }
        };
        match self {
            Add { a, b } => {
                push(a, ops::sum_to_shape(g, a.shape()));
                push(b, ops::sum_to_shape(g, b.shape()));
            }
            Sub { a, b } => {
                push(a, ops::sum_to_shape(g, a.shape()));
                push(b, ops::sum_to_shape(&ops::neg(g), b.shape()));
            }
            Mul { a, b } => {
                push(a, ops::sum_to_shape(&ops::mul(g, b), a.shape()));
                push(b, ops::sum_to_shape(&ops::mul(g, a), b.shape()));
            }
            Div { a, b } => {
                push(a, ops::sum_to_shape(&ops::div(g, b), a.shape()));
                let gb = ops::neg(&ops::div(&ops::mul(g, a), &ops::mul(b, b)));
                push(b, ops::sum_to_shape(&gb, b.shape()));
            }
            Neg { a } => push(a, ops::neg(g)),
            Scale { a, c } => push(a, ops::scale(g, *c)),
            AddConst { a } => push(a, g.clone()),
            Powi { a, n } => {
                let ga = if *n == 0 {
                    Tensor::zeros(a.shape())
                } else {
                    ops::scale(&ops::mul(g, &ops::powi(a, n - 1)), T::from_f64(*n as f64))
                };
                push(a, ga);
            }
            Exp { a, y } => {
                let yt = if grad_enabled() {
                    ops::exp(a)
                } else {
                    Tensor::from_rc(Rc::clone(y), a.shape().to_vec(), false, None)
                };
                push(a, ops::mul(g, &yt));
            }
            Ln { a } => push(a, ops::div(g, a)),
            Tanh { a, y } => {
                let yt = if grad_enabled() {
                    ops::tanh(a)
                } else {
                    Tensor::from_rc(Rc::clone(y), a.shape().to_vec(), false, None)
                };
                let one_minus = ops::sub(&Tensor::ones(a.shape()), &ops::mul(&yt, &yt));
                push(a, ops::mul(g, &one_minus));
            }
            Sqrt { a, y } => {
                let yt = if grad_enabled() {
                    ops::sqrt(a)
                } else {
                    Tensor::from_rc(Rc::clone(y), a.shape().to_vec(), false, None)
                };
                push(a, ops::scale(&ops::div(g, &yt), T::from_f64(0.5)));
            }
            Relu { a } => {
                // Mask is constant: the second derivative is zero a.e.
                let mask = Tensor::from_fn(a.shape(), |i| {
                    if a.data()[i] > T::ZERO { T::ONE } else { T::ZERO }
                });
                push(a, ops::mul(g, &mask));
            }
            MatmulNN { a, b } => {
                push(a, ops::matmul_nt(g, b));
                push(b, ops::matmul_tn(a, g));
            }
            MatmulNT { a, b } => {
                push(a, ops::matmul_nn(g, b));
                push(b, ops::matmul_tn(g, a));
            }
            MatmulTN { a, b } => {
                push(a, ops::matmul_nt(b, g));
                push(b, ops::matmul_nn(a, g));
            }
            BmmNN { a, b } => {
                push(a, ops::bmm_nt(g, b));
                push(b, ops::bmm_tn(a, g));
            }
            BmmNT { a, b } => {
                push(a, ops::bmm_nn(g, b));
                push(b, ops::bmm_tn(g, a));
            }
            BmmTN { a, b } => {
                push(a, ops::bmm_nt(b, g));
                push(b, ops::bmm_nn(a, g));
            }
            Reshape { a } => push(a, ops::reshape(g, a.shape())),
            Permute { a, axes } => {
                let mut inv = vec![0usize; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inv[ax] = i;
                }
                push(a, ops::permute(g, &inv));
            }
            Concat { parts, axis } => {
                let mut offset = 0;
                for p in parts {
                    let len = p.shape()[*axis];
                    push(p, ops::slice(g, *axis, offset, len));
                    offset += len;
                }
            }
            Slice { a, axis, start, len } => {
                let after = a.shape()[*axis] - start - len;
                push(a, ops::pad_zeros(g, *axis, *start, after));
            }
            PadZeros { a, axis, before } => {
                push(a, ops::slice(g, *axis, *before, a.shape()[*axis]));
            }
            IndexSelect { a, indices } => {
                push(a, ops::index_add(a.shape()[0], g, indices));
            }
            IndexAdd { values, indices } => {
                push(values, ops::index_select(g, indices));
            }
            SumAll { a } | SumAxis { a } | SumToShape { a } => {
                push(a, ops::broadcast_to(g, a.shape()));
            }
            BroadcastTo { a } => push(a, ops::sum_to_shape(g, a.shape())),
        }
        out
    }
}
