//! Dense `f64` arrays with reverse-mode gradients.
//!
//! The op set is exactly what the point transformer needs: linear maps,
//! elementwise arithmetic, softmax, reductions, gathers over neighbor
//! indices and cross-entropy.

mod optim;
mod tape;
mod tensor;

pub use optim::{adam_step, sgd_step, AdamConfig, AdamMoments};
pub use tape::{Gradients, ReduceKind, Tape, Var, PROB_FLOOR};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("{op}: shape mismatch, expected {expected:?}, found {found:?}")]
    ShapeMismatch { op: &'static str, expected: Vec<usize>, found: Vec<usize> },
    #[error("invalid shape {shape:?}: extents must be positive")]
    InvalidShape { shape: Vec<usize> },
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("cannot reduce over empty axis {axis}")]
    EmptyAxis { axis: usize },
    #[error("index {index} out of range for {bound} rows")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss must be a scalar, found shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("probability row {row} sums to {sum}, not 1")]
    NotNormalized { row: usize, sum: f64 },
    #[error("learning rate must be finite and non-negative, got {0}")]
    InvalidLearningRate(f64),
}
