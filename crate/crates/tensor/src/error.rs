//! Error type for the fallible tensor boundaries.
//!
//! Operator shape mismatches panic (see crate docs); these errors cover
//! construction from external data and backward-call misuse.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} expects {expected} elements, data has {len}",
            expected = shape.iter().product::<usize>())]
    ShapeData { shape: Vec<usize>, len: usize },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },
}
