//! Tensor handles and the define-by-run graph node.
//!
//! A `Tensor` is a cheap reference-counted handle to an immutable node:
//! row-major data, a shape, and (for derived values) the recorded op used
//! for reverse-mode differentiation. Nodes are never mutated after
//! construction; parameter updates rebind names to fresh tensors instead.
//!
//! Shape mismatches in operators are programming errors and panic with a
//! message naming both shapes. Fallible boundaries (construction from
//! external data, calling `backward` on a non-scalar) return `Result`.

use std::cell::Cell;
use std::rc::Rc;

use crate::element::Element;
use crate::op::BackOp;
use crate::TensorError;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// True when newly created ops record backward information.
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Run `f` with gradient recording disabled (like an inference block).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    with_grad_enabled(false, f)
}

/// Run `f` with gradient recording forced to `enabled`, restoring the
/// previous mode afterwards (also on panic-free early return paths).
pub fn with_grad_enabled<R>(enabled: bool, f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|g| g.replace(enabled));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

pub(crate) struct Node<T: Element> {
    pub(crate) data: Rc<Vec<T>>,
    pub(crate) shape: Vec<usize>,
    /// Whether gradients flow into (leaf) or through (derived) this node.
    pub(crate) requires_grad: bool,
    /// Recorded op for derived nodes; `None` for leaves and detached values.
    pub(crate) op: Option<BackOp<T>>,
}

/// Handle to a node in the autodiff graph.
pub struct Tensor<T: Element>(pub(crate) Rc<Node<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

fn check_shape_data<T>(shape: &[usize], len: usize) -> Result<(), TensorError> {
    let numel: usize = shape.iter().product();
    if numel != len {
        return Err(TensorError::ShapeData {
            shape: shape.to_vec(),
            len,
        });
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    // ── construction ──

    pub(crate) fn from_node(
        data: Vec<T>,
        shape: Vec<usize>,
        requires_grad: bool,
        op: Option<BackOp<T>>,
    ) -> Self {
        Tensor::from_rc(Rc::new(data), shape, requires_grad, op)
    }

    pub(crate) fn from_rc(
        data: Rc<Vec<T>>,
        shape: Vec<usize>,
        requires_grad: bool,
        op: Option<BackOp<T>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Rc::new(Node {
            data,
            shape,
            requires_grad,
            op,
        }))
    }

    /// Derived node over an already shared buffer (used by ops that cache
    /// their output for the backward pass).
    pub(crate) fn derived_rc(data: Rc<Vec<T>>, shape: Vec<usize>, op: BackOp<T>) -> Self {
        if grad_enabled() && op.parents().iter().any(|p| p.0.requires_grad) {
            Tensor::from_rc(data, shape, true, Some(op))
        } else {
            Tensor::from_rc(data, shape, false, None)
        }
    }

    /// Derived node: requires_grad is inherited from parents only while
    /// gradient recording is enabled; otherwise the op is dropped.
    pub(crate) fn derived(data: Vec<T>, shape: Vec<usize>, op: BackOp<T>) -> Self {
        if grad_enabled() && op.parents().iter().any(|p| p.0.requires_grad) {
            Tensor::from_node(data, shape, true, Some(op))
        } else {
            Tensor::from_node(data, shape, false, None)
        }
    }

    /// Constant (non-differentiable) tensor from raw data.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, TensorError> {
        check_shape_data::<T>(shape, data.len())?;
        Ok(Tensor::from_node(data, shape.to_vec(), false, None))
    }

    /// Leaf that participates in differentiation (parameters, probe states).
    pub fn leaf(shape: &[usize], data: Vec<T>) -> Result<Self, TensorError> {
        check_shape_data::<T>(shape, data.len())?;
        Ok(Tensor::from_node(data, shape.to_vec(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor::from_node(vec![T::ZERO; n], shape.to_vec(), false, None)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, T::ONE)
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Tensor::from_node(vec![v; n], shape.to_vec(), false, None)
    }

    pub fn scalar(v: T) -> Self {
        Tensor::from_node(vec![v], vec![1], false, None)
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        let data: Vec<T> = (0..n).map(f).collect();
        Tensor::from_node(data, shape.to_vec(), false, None)
    }

    // ── accessors ──

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.to_vec()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(
            self.numel(),
            1,
            "item() requires exactly one element, shape {:?}",
            self.shape()
        );
        self.0.data[0]
    }

    /// Element at row-major multi-index (test convenience).
    pub fn at(&self, idx: &[usize]) -> T {
        assert_eq!(idx.len(), self.rank(), "index rank mismatch");
        let mut flat = 0;
        for (i, (&ix, &dim)) in idx.iter().zip(self.shape()).enumerate() {
            assert!(ix < dim, "index {ix} out of bounds for axis {i} (dim {dim})");
            flat = flat * dim + ix;
        }
        self.0.data[flat]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Whether this tensor is a differentiable leaf (no recorded op).
    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    /// Same data, cut loose from the graph. Shares the buffer (no copy).
    pub fn detach(&self) -> Self {
        Tensor(Rc::new(Node {
            data: Rc::clone(&self.0.data),
            shape: self.0.shape.clone(),
            requires_grad: false,
            op: None,
        }))
    }

    /// Detached copy re-marked as a differentiable leaf.
    pub fn detach_as_leaf(&self) -> Self {
        Tensor(Rc::new(Node {
            data: Rc::clone(&self.0.data),
            shape: self.0.shape.clone(),
            requires_grad: true,
            op: None,
        }))
    }

    /// Stable identity of the underlying node while the handle lives.
    pub fn id(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    pub(crate) fn op(&self) -> Option<&BackOp<T>> {
        self.0.op.as_ref()
    }

    /// True if every element is finite.
    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the raw data (diagnostic; not differentiated).
    pub fn norm_data(&self) -> f64 {
        self.0
            .data
            .iter()
            .map(|v| v.to_f64() * v.to_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Convert elementwise to another precision (detached constant).
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data: Vec<U> = self.0.data.iter().map(|v| U::from_f64(v.to_f64())).collect();
        Tensor::from_node(data, self.0.shape.clone(), false, None)
    }
}

impl<T: Element> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let preview: Vec<&T> = self.0.data.iter().take(8).collect();
        write!(
            f,
            "Tensor{{shape: {:?}, requires_grad: {}, data: {:?}{}}}",
            self.0.shape,
            self.0.requires_grad,
            preview,
            if self.numel() > 8 { ", ..." } else { "" }
        )
    }
}
