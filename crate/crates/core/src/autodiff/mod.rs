//! Dense tensors, a differentiable tape, Adam, and the samplers used to turn
//! generator logits into discrete graphs.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod sampling;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{central_difference, five_point_difference, max_relative_error};
pub use sampling::{
    categorical_sample, dropout_mask, gumbel_noise, gumbel_softmax, gumbel_softmax_sample, one_hot_argmax,
};
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward needs a single-element output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("row {row} is not a probability distribution (sum {sum})")]
    NotADistribution { row: usize, sum: f64 },
}
