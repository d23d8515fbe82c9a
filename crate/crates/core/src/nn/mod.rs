//! Trainable layers built on [`crate::autodiff`].

mod checkpoint;
mod dense;
mod lstm;
mod params;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use dense::{Activation, DenseLayer, Dropout, Mlp};
pub(crate) use lstm::carry;
pub use lstm::{LstmCell, LstmStack, StepMask};
pub use params::{Initializer, Param, ParamId, ParamStore};

use thiserror::Error;

use crate::autodiff::TensorError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer dimensions must be positive")]
    ZeroDim,
    #[error("dropout rate must lie in [0, 1), got {0}")]
    DropoutRate(f64),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("parameter {name}: expected shape {expected:?}, got {got:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("checkpoint has no record for parameter {0}")]
    MissingRecord(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
