//! MLP generator, relational graph-convolution critic, and the adversarial
//! training step.

mod discriminator;
mod generator;
mod loss;
pub mod persist;
mod train;


pub use discriminator::{rgcn_layer, Discriminator, DiscriminatorConfig, DiscriminatorMasks};
pub use generator::{GeneratedBatch, Generator, GeneratorConfig, GeneratorNoise, OutputMode};
pub use loss::{
    discriminator_loss, generator_loss, gradient_penalty, interpolate, penalty_from_critic, EpsilonMode, LossForm,
};
pub use train::{local_epoch, shuffled_batches, train_epochs, Batch, LocalModels, StepLoss, TrainOptions, ZSchedule};

use rand::Rng;
use thiserror::Error;

use crate::autodiff::checkpoint::CheckpointError;
use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum GanError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("no training batches")]
    EmptyDataset,
    #[error("bad layer dimensions {0:?}")]
    BadDimensions(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Glorot-uniform `[fan_in, fan_out]` weight.
pub(crate) fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(&[fan_in, fan_out], |_| rng.gen_range(-limit..limit) as f32)
}

/// Records f32 parameters as differentiable leaves of a tape of any precision.
pub fn leaves<'t, F: Scalar>(tape: &'t Tape<F>, params: &[Tensor]) -> Vec<Var<'t, F>> {
    params.iter().map(|p| tape.leaf(p.cast())).collect()
}

/// `x @ w + b` applied to every node of a `[batch, nodes, in]` tensor.
pub(crate) fn node_linear<'t, F: Scalar>(
    x: Var<'t, F>,
    w: Var<'t, F>,
    b: Var<'t, F>,
) -> Result<Var<'t, F>, AutodiffError> {
    let s = x.shape();
    let (bs, n, d) = (s[0], s[1], s[2]);
    let out = w.shape()[1];
    x.reshape(&[bs * n, d])?.matmul(w)?.reshape(&[bs, n, out])?.add_bias(b)
}
