use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Discriminator, DiscriminatorMasks, GanError};
use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};

/// Objective family for both players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossForm {
    /// Critic differences: `-D(gen)` for the generator and
    /// `D(gen) - D(exist) + penalty` for the critic.
    #[default]
    Wgan,
    /// Log form on `(D + 1) / 2`: `-log D(gen)` and
    /// `-log D(gen) + log D(exist) + penalty`, signs as printed.
    Log,
}

/// How the interpolation weight between real and generated samples is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum EpsilonMode {
    /// A fresh `U(0, 1)` draw per sample.
    #[default]
    Uniform,
    /// The same weight for every sample.
    Fixed(f64),
}

impl EpsilonMode {
    pub fn validate(&self) -> Result<(), GanError> {
        match *self {
            EpsilonMode::Fixed(e) if !(0.0..=1.0).contains(&e) => {
                Err(GanError::InvalidOption(format!("fixed epsilon {e} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Tensor {
        match *self {
            EpsilonMode::Uniform => Tensor::from_fn(&[batch], |_| rng.gen::<f32>()),
            EpsilonMode::Fixed(e) => Tensor::full(&[batch], e as f32),
        }
    }
}

// log of the critic output shifted into (0, 1); the floor keeps saturated
// f32 outputs finite
fn shifted_log<'t, F: Scalar>(d: Var<'t, F>) -> Var<'t, F> {
    let half = F::from_f64_lossy(0.5);
    d.add_scalar(F::one())
        .scale(half)
        .clamp_min(F::from_f64_lossy(1e-7))
        .ln()
}

pub fn generator_loss<'t, F: Scalar>(d_gen: Var<'t, F>, form: LossForm) -> Var<'t, F> {
    match form {
        LossForm::Wgan => d_gen.mean().scale(-F::one()),
        LossForm::Log => shifted_log(d_gen).mean().scale(-F::one()),
    }
}

pub fn discriminator_loss<'t, F: Scalar>(
    d_gen: Var<'t, F>,
    d_exist: Var<'t, F>,
    penalty: Var<'t, F>,
    gamma: f64,
    form: LossForm,
) -> Result<Var<'t, F>, AutodiffError> {
    let (gen, exist) = match form {
        LossForm::Wgan => (d_gen.mean(), d_exist.mean()),
        LossForm::Log => (
            shifted_log(d_gen).mean().scale(-F::one()),
            shifted_log(d_exist).mean().scale(-F::one()),
        ),
    };
    gen.sub(exist)?.add(penalty.scale(F::from_f64_lossy(gamma)))
}

/// `eps * exist + (1 - eps) * gen`, with one weight per leading-axis sample.
pub fn interpolate<F: Scalar>(exist: &Tensor<F>, gen: &Tensor<F>, eps: &Tensor<F>) -> Tensor<F> {
    assert_eq!(exist.shape(), gen.shape(), "interpolation endpoints differ in shape");
    let per = exist.len() / eps.len().max(1);
    let mut out = exist.clone();
    for (k, (o, &g)) in out.data_mut().iter_mut().zip(gen.data()).enumerate() {
        let e = eps.data()[k / per];
        *o = e * *o + (F::one() - e) * g;
    }
    out
}

/// Mean over samples of `(|grad_x critic(x)| - 1)^2`, with the input
/// gradient kept on the tape so the result is differentiable in the critic's
/// parameters.
///
/// `critic` must score samples independently and return one value per
/// leading-axis entry.
pub fn penalty_from_critic<'t, F: Scalar>(
    tape: &'t Tape<F>,
    nodes: Tensor<F>,
    edges: Tensor<F>,
    critic: impl FnOnce(Var<'t, F>, Var<'t, F>) -> Result<Var<'t, F>, GanError>,
) -> Result<Var<'t, F>, GanError> {
    let bs = nodes.shape()[0];
    let v = tape.leaf(nodes);
    let a = tape.leaf(edges);
    let scores = critic(v, a)?;
    let grads = tape.grad(scores.sum(), &[v, a])?;
    let sq = |g: Var<'t, F>| -> Result<Var<'t, F>, AutodiffError> {
        let flat = g.reshape(&[bs, g.value().len() / bs.max(1)])?;
        flat.mul(flat)?.sum_trailing(1)
    };
    let norm = sq(grads[0])?
        .add(sq(grads[1])?)?
        .add_scalar(F::from_f64_lossy(1e-12))
        .sqrt()
        .add_scalar(-F::one());
    Ok(norm.mul(norm)?.mean())
}

/// Gradient penalty of the critic on interpolates between real and generated
/// batches.
#[allow(clippy::too_many_arguments)]
pub fn gradient_penalty<'t, F: Scalar>(
    model: &Discriminator,
    params: &[Var<'t, F>],
    exist: (&Tensor<F>, &Tensor<F>),
    gen: (&Tensor<F>, &Tensor<F>),
    eps: &Tensor<F>,
    masks: Option<&DiscriminatorMasks>,
) -> Result<Var<'t, F>, GanError> {
    let tape = params[0].tape();
    let nodes = interpolate(exist.0, gen.0, eps);
    let edges = interpolate(exist.1, gen.1, eps);
    penalty_from_critic(tape, nodes, edges, |v, a| model.forward(params, v, a, masks))
}
