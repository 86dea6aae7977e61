//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! A [`Graph`] records operations as they are applied. Each node caches its
//! forward value, and [`Graph::backward`] sweeps the record once in reverse to
//! produce gradients for the borrowed parameter slice. [`Adam`] consumes those
//! gradients.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, relative_error};
pub use graph::{Axis, Graph, OpKind, Var};
pub use tensor::{lit, Scalar, Tensor};


#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op:?} expects {expected} operands, got {got}")]
    Arity {
        op: OpKind,
        expected: usize,
        got: usize,
    },
    #[error("slice {start}..{end} out of range for shape {shape:?}")]
    Slice {
        shape: Vec<usize>,
        start: usize,
        end: usize,
    },
    #[error("softmax over an empty axis")]
    EmptySoftmax,
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("optimizer: expected {expected} parameter tensors, got {got}")]
    ParamCount { expected: usize, got: usize },
}
