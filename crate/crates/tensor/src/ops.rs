//! Differentiable tensor operations.
//!
//! Binary ops broadcast with the trailing-dimension rule: shapes are
//! right-aligned, and each aligned pair of dims must be equal or one of them
//! must be 1. Anything else panics with both shapes named — broadcasting is
//! never guessed beyond this rule; use explicit `reshape` for the rest.
//!
//! `div` follows IEEE semantics on zero divisors (inf/nan propagate and are
//! caught by finite-ness checks downstream); `ln` rejects nonpositive input
//! outright since every legitimate call site feeds it strictly positive
//! values.

use std::rc::Rc;

use crate::element::Element;
use crate::op::BackOp;
use crate::tensor::Tensor;

pub use crate::matmul::{bmm_nn, bmm_nt, bmm_tn, matmul_nn, matmul_nt, matmul_tn};

// ── broadcast helpers ──

/// Broadcast shape under the trailing-dimension rule, or None.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i >= rank - a.len() { a[i - (rank - a.len())] } else { 1 };
        let db = if i >= rank - b.len() { b[i - (rank - b.len())] } else { 1 };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return None;
        };
    }
    Some(out)
}

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Strides of `shape` right-aligned into `out_shape`, with 0 on broadcast axes.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let own = contiguous_strides(shape);
    let offset = out_shape.len() - shape.len();
    let mut s = vec![0usize; out_shape.len()];
    for i in 0..shape.len() {
        s[offset + i] = if shape[i] == 1 { 0 } else { own[i] };
    }
    s
}

/// Apply `f` elementwise over the broadcast of `a` and `b`.
fn binary_map<T: Element>(
    name: &str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> (Vec<T>, Vec<usize>) {
    let out_shape = broadcast_shape(a.shape(), b.shape()).unwrap_or_else(|| {
        panic!("{name}: shapes {:?} and {:?} do not broadcast", a.shape(), b.shape())
    });
    let (ad, bd) = (a.data(), b.data());
    let n: usize = out_shape.iter().product();

    // Same shape: straight zip.
    if a.shape() == b.shape() {
        let out = ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect();
        return (out, out_shape);
    }
    // Scalar on either side.
    if b.numel() == 1 {
        let y = bd[0];
        return (ad.iter().map(|&x| f(x, y)).collect(), out_shape);
    }
    if a.numel() == 1 {
        let x = ad[0];
        return (bd.iter().map(|&y| f(x, y)).collect(), out_shape);
    }
    // rhs is an exact trailing block of lhs (e.g. [G,S,d] ∘ [S,d] or [d]).
    if out_shape == a.shape() && is_suffix(b.shape(), a.shape()) {
        let m = b.numel();
        let mut out = Vec::with_capacity(n);
        for chunk in ad.chunks_exact(m) {
            out.extend(chunk.iter().zip(bd).map(|(&x, &y)| f(x, y)));
        }
        return (out, out_shape);
    }
    if out_shape == b.shape() && is_suffix(a.shape(), b.shape()) {
        let m = a.numel();
        let mut out = Vec::with_capacity(n);
        for chunk in bd.chunks_exact(m) {
            out.extend(chunk.iter().zip(ad).map(|(&y, &x)| f(x, y)));
        }
        return (out, out_shape);
    }
    // Row broadcast: same rank, rhs last axis is 1, rest equal ([.., n] ∘ [.., 1]).
    if a.shape() == out_shape && row_broadcasts(b.shape(), a.shape()) {
        let cols = *a.shape().last().unwrap();
        let mut out = Vec::with_capacity(n);
        for (r, chunk) in ad.chunks_exact(cols).enumerate() {
            let y = bd[r];
            out.extend(chunk.iter().map(|&x| f(x, y)));
        }
        return (out, out_shape);
    }
    if b.shape() == out_shape && row_broadcasts(a.shape(), b.shape()) {
        let cols = *b.shape().last().unwrap();
        let mut out = Vec::with_capacity(n);
        for (r, chunk) in bd.chunks_exact(cols).enumerate() {
            let x = ad[r];
            out.extend(chunk.iter().map(|&y| f(x, y)));
        }
        return (out, out_shape);
    }
    // General case: odometer over the output with per-input strides.
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let rank = out_shape.len();
    let mut out = Vec::with_capacity(n);
    let mut coord = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    let inner = out_shape[rank - 1];
    let (sa_in, sb_in) = (sa[rank - 1], sb[rank - 1]);
    let outer = n / inner;
    for _ in 0..outer {
        let (mut ja, mut jb) = (ia, ib);
        for _ in 0..inner {
            out.push(f(ad[ja], bd[jb]));
            ja += sa_in;
            jb += sb_in;
        }
        // Advance the outer odometer (all axes but the last).
        for ax in (0..rank - 1).rev() {
            coord[ax] += 1;
            ia += sa[ax];
            ib += sb[ax];
            if coord[ax] < out_shape[ax] {
                break;
            }
            ia -= sa[ax] * out_shape[ax];
            ib -= sb[ax] * out_shape[ax];
            coord[ax] = 0;
        }
    }
    (out, out_shape)
}

fn is_suffix(sub: &[usize], full: &[usize]) -> bool {
    sub.len() <= full.len() && full[full.len() - sub.len()..] == *sub
}

fn row_broadcasts(small: &[usize], full: &[usize]) -> bool {
    small.len() == full.len()
        && *small.last().unwrap() == 1
        && small[..small.len() - 1] == full[..full.len() - 1]
}

// ── elementwise binary ──

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (data, shape) = binary_map("add", a, b, |x, y| x.add(y));
    Tensor::derived(data, shape, BackOp::Add { a: a.clone(), b: b.clone() })
}

pub fn sub<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (data, shape) = binary_map("sub", a, b, |x, y| x.sub(y));
    Tensor::derived(data, shape, BackOp::Sub { a: a.clone(), b: b.clone() })
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (data, shape) = binary_map("mul", a, b, |x, y| x.mul(y));
    Tensor::derived(data, shape, BackOp::Mul { a: a.clone(), b: b.clone() })
}

pub fn div<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (data, shape) = binary_map("div", a, b, |x, y| x.div(y));
    Tensor::derived(data, shape, BackOp::Div { a: a.clone(), b: b.clone() })
}

// ── elementwise unary ──

fn unary_map<T: Element>(a: &Tensor<T>, f: impl Fn(T) -> T) -> Vec<T> {
    a.data().iter().map(|&x| f(x)).collect()
}

pub fn neg<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let data = unary_map(a, |x| x.neg());
    Tensor::derived(data, a.shape().to_vec(), BackOp::Neg { a: a.clone() })
}

pub fn scale<T: Element>(a: &Tensor<T>, c: T) -> Tensor<T> {
    let data = unary_map(a, |x| x.mul(c));
    Tensor::derived(data, a.shape().to_vec(), BackOp::Scale { a: a.clone(), c })
}

pub fn add_const<T: Element>(a: &Tensor<T>, c: T) -> Tensor<T> {
    let data = unary_map(a, |x| x.add(c));
    Tensor::derived(data, a.shape().to_vec(), BackOp::AddConst { a: a.clone() })
}

pub fn powi<T: Element>(a: &Tensor<T>, n: i32) -> Tensor<T> {
    let data = unary_map(a, |x| x.powi(n));
    Tensor::derived(data, a.shape().to_vec(), BackOp::Powi { a: a.clone(), n })
}

pub fn exp<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let data = Rc::new(unary_map(a, |x| x.exp()));
    let op = BackOp::Exp { a: a.clone(), y: Rc::clone(&data) };
    Tensor::derived_rc(data, a.shape().to_vec(), op)
}

/// Natural log. Rejects nonpositive input (domain error, not a number issue).
pub fn ln<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    if let Some(pos) = a.data().iter().position(|&x| x <= T::ZERO) {
        panic!("ln: nonpositive input {} at flat index {pos}", a.data()[pos]);
    }
    let data = unary_map(a, |x| x.ln());
    Tensor::derived(data, a.shape().to_vec(), BackOp::Ln { a: a.clone() })
}

pub fn tanh<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let data = Rc::new(unary_map(a, |x| x.tanh()));
    let op = BackOp::Tanh { a: a.clone(), y: Rc::clone(&data) };
    Tensor::derived_rc(data, a.shape().to_vec(), op)
}

pub fn sqrt<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let data = Rc::new(unary_map(a, |x| x.sqrt()));
    let op = BackOp::Sqrt { a: a.clone(), y: Rc::clone(&data) };
    Tensor::derived_rc(data, a.shape().to_vec(), op)
}

pub fn relu<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let data = unary_map(a, |x| x.maximum(T::ZERO));
    Tensor::derived(data, a.shape().to_vec(), BackOp::Relu { a: a.clone() })
}

// ── shape ops ──

pub fn reshape<T: Element>(a: &Tensor<T>, new_shape: &[usize]) -> Tensor<T> {
    let n: usize = new_shape.iter().product();
    assert_eq!(
        n,
        a.numel(),
        "reshape: cannot view {:?} as {:?} (element counts differ)",
        a.shape(),
        new_shape
    );
    Tensor::derived_rc(
        Rc::clone(&a.0.data),
        new_shape.to_vec(),
        BackOp::Reshape { a: a.clone() },
    )
}

pub fn permute<T: Element>(a: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let rank = a.rank();
    assert_eq!(axes.len(), rank, "permute: axes {:?} vs rank {rank}", axes);
    let mut seen = vec![false; rank];
    for &ax in axes {
        assert!(ax < rank && !seen[ax], "permute: invalid axes {:?}", axes);
        seen[ax] = true;
    }
    let in_shape = a.shape();
    let in_strides = contiguous_strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&ax| in_shape[ax]).collect();
    // Input stride for each output axis; walk output linearly with an odometer.
    let strides: Vec<usize> = axes.iter().map(|&ax| in_strides[ax]).collect();
    let n = a.numel();
    let ad = a.data();
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        let mut coord = vec![0usize; rank];
        let mut idx = 0usize;
        let inner = out_shape[rank - 1];
        let inner_stride = strides[rank - 1];
        for _ in 0..n / inner {
            let mut j = idx;
            for _ in 0..inner {
                out.push(ad[j]);
                j += inner_stride;
            }
            for ax in (0..rank - 1).rev() {
                coord[ax] += 1;
                idx += strides[ax];
                if coord[ax] < out_shape[ax] {
                    break;
                }
                idx -= strides[ax] * out_shape[ax];
                coord[ax] = 0;
            }
        }
    }
    Tensor::derived(out, out_shape, BackOp::Permute { a: a.clone(), axes: axes.to_vec() })
}

/// 2-D transpose convenience.
pub fn transpose<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    assert_eq!(a.rank(), 2, "transpose: expected rank 2, got {:?}", a.shape());
    permute(a, &[1, 0])
}

pub fn concat<T: Element>(parts: &[&Tensor<T>], axis: usize) -> Tensor<T> {
    assert!(!parts.is_empty(), "concat: no parts");
    let first = parts[0].shape();
    assert!(axis < first.len(), "concat: axis {axis} out of range for {:?}", first);
    let mut axis_total = 0;
    for p in parts {
        let s = p.shape();
        assert_eq!(s.len(), first.len(), "concat: rank mismatch {:?} vs {:?}", s, first);
        for (i, (&d, &d0)) in s.iter().zip(first).enumerate() {
            assert!(
                i == axis || d == d0,
                "concat: shapes {:?} and {:?} differ off-axis",
                s,
                first
            );
        }
        axis_total += s[axis];
    }
    let mut out_shape = first.to_vec();
    out_shape[axis] = axis_total;
    let outer: usize = first[..axis].iter().product();
    let n: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(n);
    for o in 0..outer {
        for p in parts {
            let slab: usize = p.shape()[axis..].iter().product();
            out.extend_from_slice(&p.data()[o * slab..(o + 1) * slab]);
        }
    }
    Tensor::derived(
        out,
        out_shape,
        BackOp::Concat { parts: parts.iter().map(|p| (*p).clone()).collect(), axis },
    )
}

pub fn slice<T: Element>(a: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    let shape = a.shape();
    assert!(axis < shape.len(), "slice: axis {axis} out of range for {:?}", shape);
    assert!(
        start + len <= shape[axis] && len > 0,
        "slice: range {start}..{} out of bounds for axis {axis} of {:?}",
        start + len,
        shape
    );
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * len * inner);
    let ad = a.data();
    let full = shape[axis] * inner;
    for o in 0..outer {
        let base = o * full + start * inner;
        out.extend_from_slice(&ad[base..base + len * inner]);
    }
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    Tensor::derived(out, out_shape, BackOp::Slice { a: a.clone(), axis, start, len })
}

/// Zero-pad along `axis`: `before` zeros in front, `after` behind.
pub fn pad_zeros<T: Element>(
    a: &Tensor<T>,
    axis: usize,
    before: usize,
    after: usize,
) -> Tensor<T> {
    let shape = a.shape();
    assert!(axis < shape.len(), "pad_zeros: axis {axis} out of range for {:?}", shape);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let new_axis = shape[axis] + before + after;
    let mut out = vec![T::ZERO; outer * new_axis * inner];
    let ad = a.data();
    let full_in = shape[axis] * inner;
    let full_out = new_axis * inner;
    for o in 0..outer {
        let src = &ad[o * full_in..(o + 1) * full_in];
        let dst = &mut out[o * full_out + before * inner..][..full_in];
        dst.copy_from_slice(src);
    }
    let mut out_shape = shape.to_vec();
    out_shape[axis] = new_axis;
    Tensor::derived(out, out_shape, BackOp::PadZeros { a: a.clone(), axis, before })
}

/// Select subarrays along axis 0 (duplicates allowed; gradient accumulates).
pub fn index_select<T: Element>(a: &Tensor<T>, indices: &Rc<Vec<usize>>) -> Tensor<T> {
    let shape = a.shape();
    assert!(!shape.is_empty(), "index_select: scalar input");
    let d0 = shape[0];
    let row: usize = shape[1..].iter().product();
    let ad = a.data();
    let mut out = Vec::with_capacity(indices.len() * row);
    for &i in indices.iter() {
        assert!(i < d0, "index_select: index {i} out of range for dim0 {d0}");
        out.extend_from_slice(&ad[i * row..(i + 1) * row]);
    }
    let mut out_shape = shape.to_vec();
    out_shape[0] = indices.len();
    Tensor::derived(
        out,
        out_shape,
        BackOp::IndexSelect { a: a.clone(), indices: Rc::clone(indices) },
    )
}

/// Scatter-add rows of `values` into a zero tensor with `dim0` leading slots.
/// Inverse of `index_select`; duplicate indices accumulate in order.
pub fn index_add<T: Element>(
    dim0: usize,
    values: &Tensor<T>,
    indices: &Rc<Vec<usize>>,
) -> Tensor<T> {
    let shape = values.shape();
    assert_eq!(
        shape[0],
        indices.len(),
        "index_add: {} values vs {} indices",
        shape[0],
        indices.len()
    );
    let row: usize = shape[1..].iter().product();
    let mut out = vec![T::ZERO; dim0 * row];
    let vd = values.data();
    for (k, &i) in indices.iter().enumerate() {
        assert!(i < dim0, "index_add: index {i} out of range for dim0 {dim0}");
        let dst = &mut out[i * row..(i + 1) * row];
        let src = &vd[k * row..(k + 1) * row];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = d.add(s);
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape[0] = dim0;
    Tensor::derived(
        out,
        out_shape,
        BackOp::IndexAdd { values: values.clone(), indices: Rc::clone(indices) },
    )
}

// ── reductions ──

pub fn sum_all<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let mut acc = T::ZERO;
    for &x in a.data() {
        acc = acc.add(x);
    }
    Tensor::derived(vec![acc], vec![1], BackOp::SumAll { a: a.clone() })
}

pub fn mean_all<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    scale(&sum_all(a), T::from_f64(1.0 / a.numel() as f64))
}

/// Sum over one axis, keeping it as size 1.
pub fn sum_axis<T: Element>(a: &Tensor<T>, axis: usize) -> Tensor<T> {
    let shape = a.shape();
    assert!(axis < shape.len(), "sum_axis: axis {axis} out of range for {:?}", shape);
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let ad = a.data();
    let mut out = vec![T::ZERO; outer * inner];
    if inner == 1 {
        for o in 0..outer {
            let mut acc = T::ZERO;
            for &x in &ad[o * n..(o + 1) * n] {
                acc = acc.add(x);
            }
            out[o] = acc;
        }
    } else {
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for k in 0..n {
                let src = &ad[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = d.add(s);
                }
            }
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape[axis] = 1;
    Tensor::derived(out, out_shape, BackOp::SumAxis { a: a.clone() })
}

pub fn mean_axis<T: Element>(a: &Tensor<T>, axis: usize) -> Tensor<T> {
    scale(&sum_axis(a, axis), T::from_f64(1.0 / a.shape()[axis] as f64))
}

/// Reduce `a` to `target` by summing broadcast axes (adjoint of broadcast).
pub fn sum_to_shape<T: Element>(a: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    if a.shape() == target {
        return a.clone();
    }
    assert_eq!(
        broadcast_shape(target, a.shape()).as_deref(),
        Some(a.shape()),
        "sum_to_shape: {:?} is not a broadcast reduction of {:?}",
        target,
        a.shape()
    );
    let st = broadcast_strides(target, a.shape());
    let rank = a.rank();
    let ad = a.data();
    let n_out: usize = target.iter().product();
    let mut out = vec![T::ZERO; n_out];
    let mut coord = vec![0usize; rank];
    let mut j = 0usize;
    let shape = a.shape();
    for &x in ad {
        out[j] = out[j].add(x);
        for ax in (0..rank).rev() {
            coord[ax] += 1;
            j += st[ax];
            if coord[ax] < shape[ax] {
                break;
            }
            j -= st[ax] * shape[ax];
            coord[ax] = 0;
        }
    }
    Tensor::derived(out, target.to_vec(), BackOp::SumToShape { a: a.clone() })
}

/// Materialize `a` broadcast to `target` (adjoint of `sum_to_shape`).
pub fn broadcast_to<T: Element>(a: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    assert_eq!(
        broadcast_shape(a.shape(), target).as_deref(),
        Some(target),
        "broadcast_to: {:?} does not broadcast to {:?}",
        a.shape(),
        target
    );
    if a.shape() == target {
        return a.clone();
    }
    let sa = broadcast_strides(a.shape(), target);
    let rank = target.len();
    let n: usize = target.iter().product();
    let ad = a.data();
    let mut out = Vec::with_capacity(n);
    let mut coord = vec![0usize; rank];
    let mut j = 0usize;
    for _ in 0..n {
        out.push(ad[j]);
        for ax in (0..rank).rev() {
            coord[ax] += 1;
            j += sa[ax];
            if coord[ax] < target[ax] {
                break;
            }
            j -= sa[ax] * target[ax];
            coord[ax] = 0;
        }
    }
    Tensor::derived(out, target.to_vec(), BackOp::BroadcastTo { a: a.clone() })
}

/// Per-slice maxima along the last axis as a detached constant (keepdim).
/// Used to stabilize softmax/logsumexp; constant shift leaves grads exact.
pub fn max_last_detached<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let shape = a.shape();
    let cols = *shape.last().expect("max_last: scalar input");
    let rows = a.numel() / cols;
    let ad = a.data();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &ad[r * cols..(r + 1) * cols];
        let mut m = row[0];
        for &x in &row[1..] {
            m = m.maximum(x);
        }
        out.push(m);
    }
    let mut out_shape = shape.to_vec();
    *out_shape.last_mut().unwrap() = 1;
    Tensor::from_node(out, out_shape, false, None)
}

/// Row-wise argmax over the last axis (ties break to the lowest index).
pub fn argmax_last<T: Element>(a: &Tensor<T>) -> Vec<usize> {
    let cols = *a.shape().last().expect("argmax_last: scalar input");
    let ad = a.data();
    ad.chunks_exact(cols)
        .map(|row| {
            let mut best = 0;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

// ── composed functions ──

/// Softmax over the last axis, max-stabilized.
pub fn softmax_last<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let m = max_last_detached(a);
    let e = exp(&sub(a, &m));
    let s = sum_axis(&e, a.rank() - 1);
    div(&e, &s)
}

/// log(sum(exp(x))) over the last axis, keepdim, max-stabilized.
pub fn logsumexp_last<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let m = max_last_detached(a);
    let s = sum_axis(&exp(&sub(a, &m)), a.rank() - 1);
    add(&ln(&s), &m)
}

/// Log-softmax over the last axis.
pub fn log_softmax_last<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    sub(a, &logsumexp_last(a))
}

/// Layer normalization over the last axis with learned gain and bias.
pub fn layer_norm<T: Element>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Tensor<T> {
    let d = *x.shape().last().expect("layer_norm: scalar input");
    assert_eq!(gain.shape(), [d], "layer_norm: gain shape {:?} vs width {d}", gain.shape());
    assert_eq!(bias.shape(), [d], "layer_norm: bias shape {:?} vs width {d}", bias.shape());
    let last = x.rank() - 1;
    let mu = mean_axis(x, last);
    let xc = sub(x, &mu);
    let var = mean_axis(&mul(&xc, &xc), last);
    let denom = sqrt(&add_const(&var, T::from_f64(eps)));
    add(&mul(&div(&xc, &denom), gain), bias)
}

/// GELU activation (tanh approximation).
pub fn gelu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let c = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let inner = scale(&add(x, &scale(&powi(x, 3), T::from_f64(0.044715))), c);
    mul(&scale(x, T::from_f64(0.5)), &add_const(&tanh(&inner), T::ONE))
}

/// Sum of squares of all elements, as a differentiable scalar.
pub fn sum_squares<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    sum_all(&mul(x, x))
}

// ── method-style conveniences ──

impl<T: Element> Tensor<T> {
    pub fn add_t(&self, rhs: &Tensor<T>) -> Tensor<T> {
        add(self, rhs)
    }
    pub fn sub_t(&self, rhs: &Tensor<T>) -> Tensor<T> {
        sub(self, rhs)
    }
    pub fn mul_t(&self, rhs: &Tensor<T>) -> Tensor<T> {
        mul(self, rhs)
    }
    pub fn div_t(&self, rhs: &Tensor<T>) -> Tensor<T> {
        div(self, rhs)
    }
    pub fn neg_t(&self) -> Tensor<T> {
        neg(self)
    }
    pub fn scale_t(&self, c: T) -> Tensor<T> {
        scale(self, c)
    }
    pub fn reshape_t(&self, shape: &[usize]) -> Tensor<T> {
        reshape(self, shape)
    }
    pub fn exp_t(&self) -> Tensor<T> {
        exp(self)
    }
    pub fn sum_all_t(&self) -> Tensor<T> {
        sum_all(self)
    }
}
