use rand::Rng;

use super::{AutodiffError, Scalar, Tensor, Var};

/// Standard Gumbel noise `-ln(-ln u)` with the given shape.
pub fn gumbel_noise<F: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<F> {
    Tensor::from_fn(shape, |_| {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        F::from_f64_lossy(-(-u.ln()).ln())
    })
}

/// One-hot rows at the arg-max of the last axis (first maximum on ties).
pub fn one_hot_argmax<F: Scalar>(t: &Tensor<F>) -> Tensor<F> {
    let w = t.last_dim();
    let mut out = vec![F::zero(); t.len()];
    for (r, row) in t.data().chunks(w).enumerate() {
        let mut best = 0;
        for (i, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = i;
            }
        }
        out[r * w + best] = F::one();
    }
    Tensor::new(t.shape().to_vec(), out).expect("same shape")
}

/// Gumbel-softmax over the last axis with caller-supplied noise.
///
/// Soft mode returns `softmax((logits + noise) / temperature)`. Hard mode
/// returns exact one-hot rows whose gradient is that of the soft sample.
pub fn gumbel_softmax<'t, F: Scalar>(
    logits: Var<'t, F>,
    noise: &Tensor<F>,
    temperature: f64,
    hard: bool,
) -> Result<Var<'t, F>, AutodiffError> {
    if !(temperature > 0.0) {
        return Err(AutodiffError::NonPositiveTemperature(temperature));
    }
    let tape = logits.tape();
    let soft = logits
        .add(tape.constant(noise.clone()))?
        .scale(F::from_f64_lossy(1.0 / temperature))
        .softmax();
    if hard {
        let h = one_hot_argmax(&soft.value());
        soft.straight_through(h)
    } else {
        Ok(soft)
    }
}

/// Tensor-level Gumbel-softmax draw.
pub fn gumbel_softmax_sample<F: Scalar, R: Rng + ?Sized>(
    logits: &Tensor<F>,
    temperature: f64,
    hard: bool,
    rng: &mut R,
) -> Result<Tensor<F>, AutodiffError> {
    if !(temperature > 0.0) {
        return Err(AutodiffError::NonPositiveTemperature(temperature));
    }
    let tape = super::Tape::new();
    let noise = gumbel_noise(logits.shape(), rng);
    let out = gumbel_softmax(tape.constant(logits.clone()), &noise, temperature, hard)?;
    let v = (*out.value()).clone();
    Ok(v)
}

/// Draws one category per row of `probabilities` and returns one-hot rows.
pub fn categorical_sample<F: Scalar, R: Rng + ?Sized>(
    probabilities: &Tensor<F>,
    rng: &mut R,
) -> Result<Tensor<F>, AutodiffError> {
    let w = probabilities.last_dim();
    let mut out = vec![F::zero(); probabilities.len()];
    for (r, row) in probabilities.data().chunks(w).enumerate() {
        let sum: f64 = row.iter().map(|x| x.to_f64_lossy()).sum();
        if (sum - 1.0).abs() > 1e-5 || row.iter().any(|&x| x < F::zero() || !x.is_finite()) {
            return Err(AutodiffError::NotADistribution { row: r, sum });
        }
        let u: f64 = rng.gen::<f64>() * sum;
        let mut acc = 0.0;
        let mut pick = w - 1;
        for (i, &p) in row.iter().enumerate() {
            acc += p.to_f64_lossy();
            if u < acc {
                pick = i;
                break;
            }
        }
        // never land on a zero-probability tail entry through rounding
        while pick > 0 && row[pick] == F::zero() {
            pick -= 1;
        }
        out[r * w + pick] = F::one();
    }
    Tensor::new(probabilities.shape().to_vec(), out)
}

/// Inverted-dropout mask: entries are `0` with probability `ratio`, else
/// `1 / (1 - ratio)`.
pub fn dropout_mask<F: Scalar, R: Rng + ?Sized>(shape: &[usize], ratio: f64, rng: &mut R) -> Tensor<F> {
    if ratio <= 0.0 {
        return Tensor::ones(shape);
    }
    let keep = F::from_f64_lossy(1.0 / (1.0 - ratio));
    Tensor::from_fn(shape, |_| if rng.gen::<f64>() < ratio { F::zero() } else { keep })
}
