use serde::{Deserialize, Serialize};

use super::FederationError;
use crate::autodiff::Tensor;
use crate::gan::{Discriminator, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Proportional to each client's sample count.
    #[default]
    Samples,
    Uniform,
}

/// Per-parameter weighted mean of parameter lists; `weights` need not be
/// normalized.
///
/// Each entry is summed in f64 over the sorted weighted terms, so the result
/// does not depend on the order of the models.
pub fn fedavg(models: &[&[Tensor]], weights: &[f64]) -> Result<Vec<Tensor>, FederationError> {
    let Some(first) = models.first() else {
        return Err(FederationError::NoClients);
    };
    if weights.len() != models.len() {
        return Err(FederationError::InvalidConfig(format!(
            "{} weights for {} models",
            weights.len(),
            models.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(FederationError::InvalidConfig(format!("bad weights {weights:?}")));
    }
    for (k, m) in models.iter().enumerate() {
        if m.len() != first.len() {
            return Err(FederationError::ArchitectureMismatch(format!(
                "model {k} has {} tensors, expected {}",
                m.len(),
                first.len()
            )));
        }
        for (i, (a, b)) in m.iter().zip(first.iter()).enumerate() {
            if a.shape() != b.shape() {
                return Err(FederationError::ArchitectureMismatch(format!(
                    "model {k} tensor {i}: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
    }
    let norm: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut terms = vec![0.0f64; models.len()];
    let out = (0..first.len())
        .map(|i| {
            Tensor::from_fn(first[i].shape(), |e| {
                for (t, (m, w)) in terms.iter_mut().zip(models.iter().zip(&norm)) {
                    *t = f64::from(m[i].data()[e]) * w;
                }
                terms.sort_unstable_by(f64::total_cmp);
                terms.iter().sum::<f64>() as f32
            })
        })
        .collect();
    Ok(out)
}

/// Averages generators and critics independently.
pub fn fedavg_models(
    models: &[(&Generator, &Discriminator)],
    weights: &[f64],
) -> Result<(Generator, Discriminator), FederationError> {
    let Some((g0, d0)) = models.first() else {
        return Err(FederationError::NoClients);
    };
    if models
        .iter()
        .any(|(g, d)| g.config != g0.config || d.config != d0.config)
    {
        return Err(FederationError::ArchitectureMismatch("client layouts differ".into()));
    }
    let gens: Vec<&[Tensor]> = models.iter().map(|(g, _)| g.params.as_slice()).collect();
    let discs: Vec<&[Tensor]> = models.iter().map(|(_, d)| d.params.as_slice()).collect();
    let gen = Generator::from_params(g0.config.clone(), fedavg(&gens, weights)?)?;
    let disc = Discriminator::from_params(d0.config.clone(), fedavg(&discs, weights)?)?;
    Ok((gen, disc))
}
