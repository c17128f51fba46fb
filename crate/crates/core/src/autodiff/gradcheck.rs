use super::{Scalar, Tensor};

/// Central finite differences of `f` with respect to every entry of every
/// input, step `h`.
pub fn central_difference<F: Scalar>(f: impl Fn(&[Tensor<F>]) -> F, inputs: &[Tensor<F>], h: f64) -> Vec<Tensor<F>> {
    difference(f, inputs, h, &[(1.0, 0.5)])
}

/// Fourth-order central stencil, for tolerances near f64 resolution.
pub fn five_point_difference<F: Scalar>(f: impl Fn(&[Tensor<F>]) -> F, inputs: &[Tensor<F>], h: f64) -> Vec<Tensor<F>> {
    difference(f, inputs, h, &[(1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)])
}

// gradient = sum over (offset, weight) of weight * (f(x + o h) - f(x - o h)) / h
fn difference<F: Scalar>(
    f: impl Fn(&[Tensor<F>]) -> F,
    inputs: &[Tensor<F>],
    h: f64,
    stencil: &[(f64, f64)],
) -> Vec<Tensor<F>> {
    let mut work: Vec<Tensor<F>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i].to_f64_lossy();
            let mut acc = 0.0;
            for &(o, w) in stencil {
                work[k].data_mut()[i] = F::from_f64_lossy(x0 + o * h);
                let up = f(&work).to_f64_lossy();
                work[k].data_mut()[i] = F::from_f64_lossy(x0 - o * h);
                let down = f(&work).to_f64_lossy();
                acc += w * (up - down);
            }
            work[k].data_mut()[i] = inputs[k].data()[i];
            g.data_mut()[i] = F::from_f64_lossy(acc / h);
        }
        out.push(g);
    }
    out
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all entries.
///
/// The floor keeps entries whose true gradient is near zero from being
/// judged on pure rounding noise.
pub fn max_relative_error<F: Scalar>(analytic: &[Tensor<F>], numeric: &[Tensor<F>], floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape(), "gradient shapes differ");
        for (&x, &y) in a.data().iter().zip(n.data()) {
            let (x, y) = (x.to_f64_lossy(), y.to_f64_lossy());
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
