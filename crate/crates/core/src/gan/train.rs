use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    discriminator_loss, generator_loss, gradient_penalty, leaves, Discriminator, EpsilonMode, GanError, Generator,
    LossForm, OutputMode,
};
use crate::autodiff::{AdamConfig, AdamState, Tape, Tensor};
use crate::molgraph::{MolecularGraph, NUM_ATOM_TYPES, NUM_BOND_TYPES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    /// Gradient-penalty weight.
    pub gamma: f64,
    pub epsilon: EpsilonMode,
    pub loss_form: LossForm,
    /// Gumbel-softmax temperature for generated samples.
    pub temperature: f64,
    /// Feed one-hot samples with straight-through gradients instead of soft
    /// Gumbel samples.
    pub straight_through: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            epsilon: EpsilonMode::Uniform,
            loss_form: LossForm::Wgan,
            temperature: 1.0,
            straight_through: true,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<(), GanError> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(GanError::InvalidOption(format!("gamma {} must be >= 0", self.gamma)));
        }
        if !(self.temperature > 0.0) {
            return Err(GanError::InvalidOption(format!(
                "temperature {} must be > 0",
                self.temperature
            )));
        }
        self.epsilon.validate()
    }
}

/// A stacked batch of existing molecules.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[batch, n, 10]`
    pub nodes: Tensor,
    /// `[batch, n, n, 5]`
    pub edges: Tensor,
}

impl Batch {
    /// Stacks graphs padded to `n_max` nodes.
    pub fn from_graphs(graphs: &[&MolecularGraph], n_max: usize) -> Self {
        let mut v = Vec::with_capacity(graphs.len() * n_max * NUM_ATOM_TYPES);
        let mut a = Vec::with_capacity(graphs.len() * n_max * n_max * NUM_BOND_TYPES);
        for g in graphs {
            let g = g.padded(n_max);
            v.extend(g.node_matrix());
            a.extend(g.adjacency_tensor());
        }
        let bs = graphs.len();
        Self {
            nodes: Tensor::new(vec![bs, n_max, NUM_ATOM_TYPES], v).expect("padded size"),
            edges: Tensor::new(vec![bs, n_max, n_max, NUM_BOND_TYPES], a).expect("padded size"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffles `graphs` and cuts full batches of `batch_size`; the remainder is
/// dropped so every batch has the same size.
pub fn shuffled_batches<R: Rng + ?Sized>(
    graphs: &[MolecularGraph],
    batch_size: usize,
    n_max: usize,
    rng: &mut R,
) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    order.shuffle(rng);
    order
        .chunks_exact(batch_size.max(1))
        .map(|c| {
            let refs: Vec<&MolecularGraph> = c.iter().map(|&i| &graphs[i]).collect();
            Batch::from_graphs(&refs, n_max)
        })
        .collect()
}

/// Prior samples that are held fixed for a number of local epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSchedule {
    /// Epochs between redraws; 0 draws fresh noise at every step.
    pub interval: u64,
    cache: Vec<Tensor>,
}

impl ZSchedule {
    pub fn new(interval: u64) -> Self {
        Self {
            interval,
            cache: Vec::new(),
        }
    }

    fn start_epoch(&mut self, epoch: u64) {
        if self.interval == 0 || epoch.is_multiple_of(self.interval) {
            self.cache.clear();
        }
    }

    fn get<R: Rng + ?Sized>(&mut self, gen: &Generator, slot: usize, bs: usize, rng: &mut R) -> Tensor {
        if self.interval == 0 {
            return gen.draw_z(bs, rng);
        }
        while self.cache.len() <= slot {
            let z = gen.draw_z(bs, rng);
            self.cache.push(z);
        }
        if self.cache[slot].shape()[0] != bs {
            self.cache[slot] = gen.draw_z(bs, rng);
        }
        self.cache[slot].clone()
    }
}

/// A client's (or the centralized trainer's) models with optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModels {
    pub gen: Generator,
    pub disc: Discriminator,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    pub z: ZSchedule,
}

impl LocalModels {
    pub fn new(gen: Generator, disc: Discriminator, adam: AdamConfig, z_interval: u64) -> Self {
        let gen_opt = AdamState::new(adam, &gen.params);
        let disc_opt = AdamState::new(adam, &disc.params);
        Self {
            gen,
            disc,
            gen_opt,
            disc_opt,
            z: ZSchedule::new(z_interval),
        }
    }

    /// Local epochs completed so far.
    pub fn epochs(&self) -> u64 {
        self.gen_opt.epochs()
    }
}

/// Losses recorded for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub disc: f32,
    pub gen: f32,
    pub penalty: f32,
}

/// One pass over `batches`: per batch, a critic step on generated versus
/// existing molecules, then a generator step on the updated critic with the
/// same generated sample noise.
pub fn local_epoch<R: Rng + ?Sized>(
    models: &mut LocalModels,
    batches: &[Batch],
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<Vec<StepLoss>, GanError> {
    if batches.is_empty() {
        return Err(GanError::EmptyDataset);
    }
    opts.validate()?;
    let mode = OutputMode::Gumbel {
        temperature: opts.temperature,
        hard: opts.straight_through,
    };
    models.z.start_epoch(models.epochs());
    let mut trace = Vec::with_capacity(batches.len());

    for (slot, batch) in batches.iter().enumerate() {
        let bs = batch.len();
        let z = models.z.get(&models.gen, slot, bs, rng);
        let noise = models.gen.draw_noise(z, true, rng);
        let fake_masks = models.disc.draw_masks(bs, rng);
        let real_masks = models.disc.draw_masks(bs, rng);
        let mix_masks = models.disc.draw_masks(bs, rng);
        let eps = opts.epsilon.draw(bs, rng);

        // critic step with the generator frozen
        let (disc_loss, penalty) = {
            let tape = Tape::<f32>::new();
            let gp: Vec<_> = models.gen.params.iter().map(|p| tape.constant(p.clone())).collect();
            let fake = models.gen.forward(&gp, &noise, mode)?;
            let fake_v = (*fake.nodes.value()).clone();
            let fake_a = (*fake.edges.value()).clone();
            let dp = leaves(&tape, &models.disc.params);
            let d_fake = models.disc.forward(
                &dp,
                tape.constant(fake_v.clone()),
                tape.constant(fake_a.clone()),
                fake_masks.as_ref(),
            )?;
            let d_real = models.disc.forward(
                &dp,
                tape.constant(batch.nodes.clone()),
                tape.constant(batch.edges.clone()),
                real_masks.as_ref(),
            )?;
            let penalty = if opts.gamma > 0.0 {
                gradient_penalty(
                    &models.disc,
                    &dp,
                    (&batch.nodes, &batch.edges),
                    (&fake_v, &fake_a),
                    &eps,
                    mix_masks.as_ref(),
                )?
            } else {
                tape.scalar(0.0)
            };
            let loss = discriminator_loss(d_fake, d_real, penalty, opts.gamma, opts.loss_form)?;
            let grads: Vec<Tensor> = tape.grad(loss, &dp)?.iter().map(|g| (*g.value()).clone()).collect();
            models.disc_opt.step(&mut models.disc.params, &grads)?;
            (loss.item(), penalty.item())
        };

        // generator step against the updated critic
        let gen_loss = {
            let tape = Tape::<f32>::new();
            let gp = leaves(&tape, &models.gen.params);
            let dp: Vec<_> = models.disc.params.iter().map(|p| tape.constant(p.clone())).collect();
            let fake = models.gen.forward(&gp, &noise, mode)?;
            let d = models.disc.forward(&dp, fake.nodes, fake.edges, fake_masks.as_ref())?;
            let loss = generator_loss(d, opts.loss_form);
            let grads: Vec<Tensor> = tape.grad(loss, &gp)?.iter().map(|g| (*g.value()).clone()).collect();
            models.gen_opt.step(&mut models.gen.params, &grads)?;
            loss.item()
        };

        trace.push(StepLoss {
            disc: disc_loss,
            gen: gen_loss,
            penalty,
        });
    }
    models.gen_opt.end_epoch();
    models.disc_opt.end_epoch();
    Ok(trace)
}

/// `epochs` local epochs over `graphs`, reshuffling the batches each epoch.
pub fn train_epochs<R: Rng + ?Sized>(
    models: &mut LocalModels,
    graphs: &[MolecularGraph],
    epochs: usize,
    batch_size: usize,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<Vec<StepLoss>, GanError> {
    let n_max = models.gen.config.n_max;
    let mut trace = Vec::new();
    for _ in 0..epochs {
        let batches = shuffled_batches(graphs, batch_size, n_max, rng);
        trace.extend(local_epoch(models, &batches, opts, rng)?);
    }
    Ok(trace)
}
