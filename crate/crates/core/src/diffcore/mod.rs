//! Reverse-mode differentiation over dense `f64` arrays.
//!
//! A [`Graph`] records every primitive as it is evaluated (define-by-run) and
//! [`Graph::backward`] walks the record in reverse to produce gradients for
//! every parameter node. Complex values are carried as two real channels, see
//! [`Array`].

mod array;
pub mod conv;
pub mod fft;
mod graph;
mod ops;

pub use array::Array;
pub use graph::{Gradients, Graph, NodeId};
pub use ops::{LinearOperator, Op};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown node id {0}")]
    UnknownNode(usize),
}

/// Splits a planar complex shape `[.., 2, h, w]` into `(lead, h, w)`.
pub fn complex_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
    let r = shape.len();
    if r < 3 || shape[r - 3] != 2 {
        return None;
    }
    let lead = shape[..r - 3].iter().product();
    Some((lead, shape[r - 2], shape[r - 1]))
}
