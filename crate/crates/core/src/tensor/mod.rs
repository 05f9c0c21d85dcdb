//! Dense 2-D tensors with a reverse-mode differentiation tape.
//!
//! Values live in [`Matrix`]; operations on [`Tensor`] handles are recorded
//! on a [`Tape`] and replayed backwards by [`Tape::backward`]. There is no
//! broadcasting: element-wise operations require identical shapes.

mod gradcheck;
pub mod kernels;
mod matrix;
mod sparse;
mod tape;

pub use gradcheck::{grad_check, grad_check_per_param, relative_error};
pub use matrix::Matrix;
pub use sparse::{CsrMatrix, SparsityPattern};
pub use tape::{Activation, EwiseOp, Tape, Tensor};

use thiserror::Error;

pub type Shape = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape { op: &'static str, left: Shape, right: Shape },

    #[error("{rows}x{cols} matrix needs {} values, got {len}", rows * cols)]
    DataLength { rows: usize, cols: usize, len: usize },

    #[error("{op}: needs at least one input")]
    EmptyInput { op: &'static str },

    #[error("masked softmax: row {row} has an empty support")]
    DegenerateRow { row: usize },

    #[error("backward needs a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("tensor belongs to a different tape")]
    ForeignTensor,

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("gradient check: objective evaluated to {value}")]
    Evaluation { value: f64 },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, left: Shape, right: Shape) -> Self {
        TensorError::Shape { op, left, right }
    }
}
