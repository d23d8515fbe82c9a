//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Graph`] is a tape rebuilt on every forward pass. Operations append
//! nodes in evaluation order and [`Graph::backward`] walks them in reverse.
//! There is no implicit broadcasting: operands of element-wise operations
//! must have identical shapes, and [`Graph::broadcast`] is the only way to
//! expand a tensor.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{
    finite_difference_check, relative_error, ElementCheck, GradCheckConfig, GradCheckReport,
    ParamCheck,
};
pub(crate) use graph::sigmoid;
pub use graph::{Graph, OpKind, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows of unequal length")]
    RaggedRows,
    #[error("{op}: axis {axis} invalid for shape {shape:?}")]
    Axis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("slice [{start}, {start}+{len}) on axis {axis} out of range for shape {shape:?}")]
    Slice {
        shape: Vec<usize>,
        axis: usize,
        start: usize,
        len: usize,
    },
    #[error("{op}: input {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("function is not deterministic: {first} then {second} at the same point")]
    NonDeterministic { first: f64, second: f64 },
    #[error("{0}")]
    InvalidArgument(String),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        TensorError::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
