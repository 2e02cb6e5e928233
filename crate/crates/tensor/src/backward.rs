//! Reverse-mode sweep over the recorded graph.
//!
//! Gradients live in a `GradStore` keyed by node identity rather than inside
//! nodes, which keeps nodes immutable and makes repeated backward calls
//! trivially independent. With `create_graph` the vector-Jacobian products
//! are themselves recorded, so stored gradients can be differentiated again.

use std::collections::{HashMap, HashSet};

use crate::element::Element;
use crate::tensor::{with_grad_enabled, Tensor};
use crate::{ops, TensorError};

/// Gradients of one backward sweep, queryable by tensor handle.
pub struct GradStore<T: Element> {
    grads: HashMap<usize, Tensor<T>>,
    // Keeps every node of the sweep alive so id() keys cannot be reused.
    _hold: Vec<Tensor<T>>,
}

impl<T: Element> GradStore<T> {
    pub fn get(&self, t: &Tensor<T>) -> Option<Tensor<T>> {
        self.grads.get(&t.id()).cloned()
    }

    /// Gradient for `t`, or a zero tensor of its shape if `t` never
    /// influenced the loss (e.g. an unused parameter).
    pub fn get_or_zeros(&self, t: &Tensor<T>) -> Tensor<T> {
        self.get(t).unwrap_or_else(|| Tensor::zeros(t.shape()))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Accumulate dloss/dx for every differentiable ancestor of `loss`.
///
/// `loss` must be a single-element tensor. With `create_graph` the returned
/// gradients stay connected to the graph (for higher-order derivatives);
/// without it they are plain constants and the sweep allocates no graph.
pub fn backward<T: Element>(
    loss: &Tensor<T>,
    create_graph: bool,
) -> Result<GradStore<T>, TensorError> {
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarBackward { shape: loss.shape().to_vec() });
    }
    if !loss.requires_grad() {
        return Ok(GradStore { grads: HashMap::new(), _hold: Vec::new() });
    }

    // Iterative post-order DFS over differentiable parents.
    let mut topo: Vec<Tensor<T>> = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    let mut stack: Vec<(Tensor<T>, usize)> = vec![(loss.clone(), 0)];
    visited.insert(loss.id());
    while let Some((node, child)) = stack.pop() {
        let parents: Vec<Tensor<T>> = node
            .op()
            .map(|op| op.parents().into_iter().cloned().collect())
            .unwrap_or_default();
        if child < parents.len() {
            stack.push((node, child + 1));
            let p = &parents[child];
            if p.requires_grad() && visited.insert(p.id()) {
                stack.push((p.clone(), 0));
            }
        } else {
            topo.push(node);
        }
    }

    let mut grads: HashMap<usize, Tensor<T>> = HashMap::new();
    grads.insert(loss.id(), Tensor::ones(loss.shape()));

    with_grad_enabled(create_graph, || {
        for node in topo.iter().rev() {
            let Some(op) = node.op() else { continue };
            let Some(g) = grads.get(&node.id()).cloned() else { continue };
            for (parent, contribution) in op.vjp(&g) {
                match grads.get(&parent.id()) {
                    Some(existing) => {
                        let sum = ops::add(existing, &contribution);
                        grads.insert(parent.id(), sum);
                    }
                    None => {
                        grads.insert(parent.id(), contribution);
                    }
                }
            }
        }
    });

    Ok(GradStore { grads, _hold: topo })
}
