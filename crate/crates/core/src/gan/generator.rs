use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{xavier, GanError};
use crate::autodiff::{dropout_mask, gumbel_noise, gumbel_softmax, Scalar, Tape, Tensor, Var};
use crate::molgraph::{MolecularGraph, DEFAULT_N_MAX, NUM_ATOM_TYPES, NUM_BOND_TYPES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub hidden_dims: Vec<usize>,
    pub noise_dim: usize,
    pub n_max: usize,
    /// Dropout after the last hidden layer, in `[0, 1)`.
    pub dropout: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 128],
            noise_dim: 16,
            n_max: DEFAULT_N_MAX,
            dropout: 0.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(GanError::BadDimensions(format!("{:?}", self.hidden_dims)));
        }
        if self.noise_dim == 0 || self.n_max == 0 {
            return Err(GanError::BadDimensions(format!(
                "noise_dim {} n_max {}",
                self.noise_dim, self.n_max
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GanError::InvalidOption(format!(
                "generator dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let n = self.n_max;
        let mut out = Vec::new();
        let mut fan_in = self.noise_dim;
        for (k, &d) in self.hidden_dims.iter().enumerate() {
            out.push((format!("gen.hidden.{k}.weight"), vec![fan_in, d]));
            out.push((format!("gen.hidden.{k}.bias"), vec![d]));
            fan_in = d;
        }
        out.push(("gen.nodes.weight".into(), vec![fan_in, n * NUM_ATOM_TYPES]));
        out.push(("gen.nodes.bias".into(), vec![n * NUM_ATOM_TYPES]));
        out.push(("gen.edges.weight".into(), vec![fan_in, n * n * NUM_BOND_TYPES]));
        out.push(("gen.edges.bias".into(), vec![n * n * NUM_BOND_TYPES]));
        out
    }
}

/// How logits become graph tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputMode {
    /// Plain softmax probabilities.
    Softmax,
    /// Gumbel-softmax with the noise carried in [`GeneratorNoise`]; `hard`
    /// gives one-hot rows with straight-through gradients.
    Gumbel { temperature: f64, hard: bool },
}

/// Everything random in one generator forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNoise {
    /// `[batch, noise_dim]`
    pub z: Tensor,
    /// `[batch, n, 10]`
    pub node_gumbel: Tensor,
    /// `[batch, n, n, 5]`, symmetric in the node axes.
    pub edge_gumbel: Tensor,
    /// `[batch, last hidden]` inverted-dropout mask, training only.
    pub dropout: Option<Tensor>,
}

pub struct GeneratedBatch<'t, F: Scalar> {
    /// `[batch, n, 10]`
    pub nodes: Var<'t, F>,
    /// `[batch, n, n, 5]`
    pub edges: Var<'t, F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub params: Vec<Tensor>,
}

impl Generator {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self, GanError> {
        config.validate()?;
        let params = config
            .shapes()
            .into_iter()
            .map(|(_, s)| {
                if s.len() == 2 {
                    xavier(s[0], s[1], rng)
                } else {
                    Tensor::zeros(&s)
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    /// Wraps existing parameters, checking their shapes.
    pub fn from_params(config: GeneratorConfig, params: Vec<Tensor>) -> Result<Self, GanError> {
        config.validate()?;
        let shapes = config.shapes();
        if shapes.len() != params.len() {
            return Err(GanError::ArchitectureMismatch(format!(
                "generator expects {} tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, s), p) in shapes.iter().zip(&params) {
            if p.shape() != s.as_slice() {
                return Err(GanError::ArchitectureMismatch(format!(
                    "{name}: expected {s:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn names(&self) -> Vec<String> {
        self.config.shapes().into_iter().map(|(n, _)| n).collect()
    }

    /// Standard-normal prior samples, `[batch, noise_dim]`.
    pub fn draw_z<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Tensor {
        Tensor::from_fn(&[batch, self.config.noise_dim], |_| rng.sample(StandardNormal))
    }

    /// Gumbel noise (and a dropout mask when `train`) for a given `z`.
    pub fn draw_noise<R: Rng + ?Sized>(&self, z: Tensor, train: bool, rng: &mut R) -> GeneratorNoise {
        let bs = z.shape()[0];
        let n = self.config.n_max;
        let node_gumbel = gumbel_noise(&[bs, n, NUM_ATOM_TYPES], rng);
        let edge_gumbel = symmetric_gumbel(bs, n, rng);
        let last = *self.config.hidden_dims.last().expect("validated");
        let dropout = (train && self.config.dropout > 0.0).then(|| dropout_mask(&[bs, last], self.config.dropout, rng));
        GeneratorNoise {
            z,
            node_gumbel,
            edge_gumbel,
            dropout,
        }
    }

    /// Runs the MLP and output heads on the tape.
    ///
    /// `params` must be this model's parameters recorded on the tape (as
    /// leaves or constants), in [`Generator::names`] order.
    pub fn forward<'t, F: Scalar>(
        &self,
        params: &[Var<'t, F>],
        noise: &GeneratorNoise,
        mode: OutputMode,
    ) -> Result<GeneratedBatch<'t, F>, GanError> {
        let tape = params[0].tape();
        let n = self.config.n_max;
        let bs = noise.z.shape()[0];
        let depth = self.config.hidden_dims.len();

        let mut h = tape.constant(noise.z.cast());
        for k in 0..depth {
            h = h.matmul(params[2 * k])?.add_bias(params[2 * k + 1])?.tanh();
        }
        if let Some(mask) = &noise.dropout {
            h = h.mask(mask.cast())?;
        }
        let p = &params[2 * depth..];

        let node_logits = h.matmul(p[0])?.add_bias(p[1])?.reshape(&[bs, n, NUM_ATOM_TYPES])?;
        let raw = h.matmul(p[2])?.add_bias(p[3])?;
        let edge_logits = raw
            .add(raw.permute_last(&transpose_permutation(n))?)?
            .scale(F::from_f64_lossy(0.5))
            .reshape(&[bs, n, n, NUM_BOND_TYPES])?;

        let (nodes, edges) = match mode {
            OutputMode::Softmax => (node_logits.softmax(), edge_logits.softmax()),
            OutputMode::Gumbel { temperature, hard } => (
                gumbel_softmax(node_logits, &noise.node_gumbel.cast(), temperature, hard)?,
                gumbel_softmax(edge_logits, &noise.edge_gumbel.cast(), temperature, hard)?,
            ),
        };
        let (keep, diag) = diagonal_fix(bs, n);
        let edges = edges.mask(keep.cast())?.add(tape.constant(diag.cast()))?;
        Ok(GeneratedBatch { nodes, edges })
    }

    /// Draws `count` discrete graphs without dropout.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        count: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Vec<MolecularGraph>, GanError> {
        const CHUNK: usize = 64;
        let n = self.config.n_max;
        let mut out = Vec::with_capacity(count);
        let mut left = count;
        while left > 0 {
            let bs = left.min(CHUNK);
            let z = self.draw_z(bs, rng);
            let noise = self.draw_noise(z, false, rng);
            let tape = Tape::<f32>::new();
            let params: Vec<_> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
            let g = self.forward(
                &params,
                &noise,
                OutputMode::Gumbel {
                    temperature,
                    hard: true,
                },
            )?;
            let (nodes, edges) = (g.nodes.value(), g.edges.value());
            let nv = n * NUM_ATOM_TYPES;
            let ne = n * n * NUM_BOND_TYPES;
            for b in 0..bs {
                let graph = MolecularGraph::from_dense(
                    n,
                    &nodes.data()[b * nv..(b + 1) * nv],
                    &edges.data()[b * ne..(b + 1) * ne],
                )
                .expect("generator output has the configured size");
                out.push(graph);
            }
            left -= bs;
        }
        Ok(out)
    }
}

/// Maps flat `(i, j, t)` to `(j, i, t)` over an `n x n x 5` block.
fn transpose_permutation(n: usize) -> Vec<usize> {
    let t = NUM_BOND_TYPES;
    let mut perm = Vec::with_capacity(n * n * t);
    for i in 0..n {
        for j in 0..n {
            for k in 0..t {
                perm.push((j * n + i) * t + k);
            }
        }
    }
    perm
}

// keep-mask clearing diagonal entries, and the zero-bond one-hot to put there
fn diagonal_fix(bs: usize, n: usize) -> (Tensor, Tensor) {
    let t = NUM_BOND_TYPES;
    let per = n * n * t;
    let diag = |idx: usize| {
        let r = idx % per;
        let cell = r / t;
        cell / n == cell % n
    };
    let keep = Tensor::from_fn(&[bs, n, n, t], |idx| if diag(idx) { 0.0 } else { 1.0 });
    let zero = Tensor::from_fn(&[bs, n, n, t], |idx| if diag(idx) && idx % t == 0 { 1.0 } else { 0.0 });
    (keep, zero)
}

fn symmetric_gumbel<R: Rng + ?Sized>(bs: usize, n: usize, rng: &mut R) -> Tensor {
    let t = NUM_BOND_TYPES;
    let mut out: Tensor = Tensor::zeros(&[bs, n, n, t]);
    for b in 0..bs {
        for i in 0..n {
            for j in i..n {
                let g: Tensor = gumbel_noise(&[t], rng);
                for k in 0..t {
                    let d = out.data_mut();
                    d[((b * n + i) * n + j) * t + k] = g.data()[k];
                    d[((b * n + j) * n + i) * t + k] = g.data()[k];
                }
            }
        }
    }
    out
}
