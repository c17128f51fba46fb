//! In-process federated training: dataset splitting, client partitions,
//! global rounds and FedAvg aggregation of both networks.

mod aggregate;
mod partition;

pub use aggregate::{fedavg, fedavg_models, Weighting};
pub use partition::{formula_labels, partition_iid, partition_noniid, split_dataset, Partition, Split};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AdamConfig;
use crate::gan::{local_epoch, shuffled_batches, Discriminator, GanError, Generator, LocalModels, TrainOptions};
use crate::metrics::{evaluate, MetricsConfig, MetricsError, MetricsReport, Reference};
use crate::molgraph::MolecularGraph;
use crate::seed;

#[derive(Debug, Error)]
pub enum FederationError {
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    BadRatios([f64; 3]),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("invalid federation setting: {0}")]
    InvalidConfig(String),
    #[error("no client models to aggregate")]
    NoClients,
    #[error("{0}")]
    Observer(String),
}

/// Stop rule on a loss curve: the last `window` round-over-round changes are
/// all below `threshold` times the curve's overall range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauRule {
    pub window: usize,
    pub threshold: f64,
    /// End training once both curves plateau instead of only reporting it.
    pub stop: bool,
}

impl Default for PlateauRule {
    fn default() -> Self {
        Self {
            window: 10,
            threshold: 0.05,
            stop: false,
        }
    }
}

impl PlateauRule {
    pub fn reached(&self, curve: &[f64]) -> bool {
        if self.window == 0 || curve.len() < self.window + 1 {
            return false;
        }
        let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let limit = self.threshold * (hi - lo);
        let tail = &curve[curve.len() - self.window - 1..];
        tail.windows(2).all(|w| (w[1] - w[0]).abs() <= limit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub num_clients: usize,
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub rounds: usize,
    pub partition: Partition,
    pub weighting: Weighting,
    pub seed: u64,
    /// Run clients one after another instead of on the thread pool.
    pub deterministic: bool,
    pub train: TrainOptions,
    pub adam: AdamConfig,
    /// Local epochs between prior redraws; 0 redraws at every step.
    pub noise_resample: u64,
    pub plateau: PlateauRule,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            num_clients: 4,
            epochs_per_round: 1,
            batch_size: 16,
            rounds: 1,
            partition: Partition::Iid,
            weighting: Weighting::Samples,
            seed: 0,
            deterministic: false,
            train: TrainOptions::default(),
            adam: AdamConfig::default(),
            noise_resample: 1000,
            plateau: PlateauRule::default(),
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<(), FederationError> {
        if self.num_clients == 0 || self.epochs_per_round == 0 || self.batch_size == 0 {
            return Err(FederationError::InvalidConfig(format!(
                "clients {}, epochs {}, batch {} must all be >= 1",
                self.num_clients, self.epochs_per_round, self.batch_size
            )));
        }
        if let Partition::NonIid { alpha } = self.partition {
            if !(alpha > 0.0) {
                return Err(FederationError::InvalidConfig(format!("alpha {alpha} must be > 0")));
            }
        }
        self.train.validate()?;
        Ok(())
    }
}

/// Random stream of one client in one round.
pub fn client_rng(seed: u64, round: usize, client: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed::derive(seed, &[0, round as u64, client as u64]))
}

fn partition_rng_seed(seed: u64) -> u64 {
    seed::derive(seed, &[1])
}

fn eval_rng(seed: u64, round: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed::derive(seed, &[2, round as u64]))
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    /// Positions of this client's molecules in the training set.
    pub indices: Vec<usize>,
    /// This client's molecules only.
    data: Vec<MolecularGraph>,
    pub models: LocalModels,
}

impl ClientState {
    pub fn sample_count(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[MolecularGraph] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientLoss {
    pub client: usize,
    pub samples: usize,
    /// Mean over the round's steps; `None` when the client was skipped.
    pub gen_loss: Option<f64>,
    pub disc_loss: Option<f64>,
}

/// One line of the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Rounds completed, counting this one.
    pub round: usize,
    pub client_losses: Vec<ClientLoss>,
    pub global_gen_loss: f64,
    pub global_disc_loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct FederationState {
    pub round: usize,
    pub gen: Generator,
    pub disc: Discriminator,
    pub clients: Vec<ClientState>,
    pub history: Vec<RoundRecord>,
}

impl FederationState {
    /// Partitions `train` over the configured clients by molecular formula.
    pub fn new(
        gen: Generator,
        disc: Discriminator,
        train: &[MolecularGraph],
        cfg: &FederationConfig,
    ) -> Result<Self, FederationError> {
        cfg.validate()?;
        let labels = formula_labels(train);
        let all: Vec<usize> = (0..train.len()).collect();
        let seed = partition_rng_seed(cfg.seed);
        let parts = match cfg.partition {
            Partition::Iid => partition_iid(&all, &labels, cfg.num_clients, seed)?,
            Partition::NonIid { alpha } => partition_noniid(&all, &labels, cfg.num_clients, alpha, seed)?,
        };
        Self::with_partitions(gen, disc, train, parts, cfg)
    }

    /// Uses the given index sets as client data without checking that they
    /// are disjoint.
    pub fn with_partitions(
        gen: Generator,
        disc: Discriminator,
        train: &[MolecularGraph],
        parts: Vec<Vec<usize>>,
        cfg: &FederationConfig,
    ) -> Result<Self, FederationError> {
        if parts.is_empty() {
            return Err(FederationError::NoClients);
        }
        if gen.config.n_max != disc.config.n_max {
            return Err(FederationError::ArchitectureMismatch(format!(
                "generator has {} node slots, critic {}",
                gen.config.n_max, disc.config.n_max
            )));
        }
        let mut clients = Vec::with_capacity(parts.len());
        for (id, indices) in parts.into_iter().enumerate() {
            let data = indices
                .iter()
                .map(|&i| {
                    train
                        .get(i)
                        .cloned()
                        .ok_or_else(|| FederationError::InvalidConfig(format!("index {i} outside the training set")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let models = LocalModels::new(gen.clone(), disc.clone(), cfg.adam, cfg.noise_resample);
            clients.push(ClientState {
                id,
                indices,
                data,
                models,
            });
        }
        Ok(Self {
            round: 0,
            gen,
            disc,
            clients,
            history: Vec::new(),
        })
    }

    pub fn gen_curve(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.global_gen_loss).collect()
    }

    pub fn disc_curve(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.global_disc_loss).collect()
    }
}

fn run_client(
    client: &mut ClientState,
    gen: &Generator,
    disc: &Discriminator,
    cfg: &FederationConfig,
    round: usize,
) -> Result<ClientLoss, FederationError> {
    let mut loss = ClientLoss {
        client: client.id,
        samples: client.data.len(),
        gen_loss: None,
        disc_loss: None,
    };
    if client.data.len() < cfg.batch_size {
        log::warn!(
            "client {} has {} molecules, fewer than one batch; skipped",
            client.id,
            client.data.len()
        );
        return Ok(loss);
    }
    client.models.gen.params.clone_from(&gen.params);
    client.models.disc.params.clone_from(&disc.params);
    let mut rng = client_rng(cfg.seed, round, client.id);
    let n_max = gen.config.n_max;
    let (mut g_sum, mut d_sum, mut steps) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..cfg.epochs_per_round {
        let batches = shuffled_batches(&client.data, cfg.batch_size, n_max, &mut rng);
        for s in local_epoch(&mut client.models, &batches, &cfg.train, &mut rng)? {
            g_sum += f64::from(s.gen);
            d_sum += f64::from(s.disc);
            steps += 1;
        }
    }
    loss.gen_loss = Some(g_sum / steps as f64);
    loss.disc_loss = Some(d_sum / steps as f64);
    Ok(loss)
}

/// Wall clock for round timing. Browsers have no `Instant`, so there it reads 0.
struct Stopwatch(#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))] std::time::Instant);

impl Stopwatch {
    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
    fn start() -> Self {
        Stopwatch()
    }

    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    fn elapsed_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }

    #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
    fn elapsed_ms(&self) -> u64 {
        0
    }
}

/// Broadcast, local training on every client, upload and aggregation.
pub fn run_round(state: &mut FederationState, cfg: &FederationConfig) -> Result<RoundRecord, FederationError> {
    cfg.validate()?;
    let start = Stopwatch::start();
    let round = state.round;
    let (gen, disc) = (&state.gen, &state.disc);
    let losses: Vec<ClientLoss> = if cfg.deterministic {
        state
            .clients
            .iter_mut()
            .map(|c| run_client(c, gen, disc, cfg, round))
            .collect::<Result<_, _>>()?
    } else {
        state
            .clients
            .par_iter_mut()
            .map(|c| run_client(c, gen, disc, cfg, round))
            .collect::<Result<_, _>>()?
    };

    let active: Vec<usize> = (0..losses.len()).filter(|&k| losses[k].gen_loss.is_some()).collect();
    if active.is_empty() {
        return Err(GanError::EmptyDataset.into());
    }
    let models: Vec<_> = active
        .iter()
        .map(|&k| (&state.clients[k].models.gen, &state.clients[k].models.disc))
        .collect();
    let weights: Vec<f64> = active
        .iter()
        .map(|&k| match cfg.weighting {
            Weighting::Samples => losses[k].samples as f64,
            Weighting::Uniform => 1.0,
        })
        .collect();
    let (gen, disc) = fedavg_models(&models, &weights)?;
    state.gen = gen;
    state.disc = disc;
    state.round += 1;

    let mean = |f: fn(&ClientLoss) -> Option<f64>| {
        active.iter().filter_map(|&k| f(&losses[k])).sum::<f64>() / active.len() as f64
    };
    let record = RoundRecord {
        round: state.round,
        global_gen_loss: mean(|l| l.gen_loss),
        global_disc_loss: mean(|l| l.disc_loss),
        client_losses: losses,
        wall_ms: start.elapsed_ms(),
    };
    state.history.push(record.clone());
    Ok(record)
}

/// Periodic evaluation of the global generator.
#[derive(Debug, Clone, Copy)]
pub struct EvalPlan<'a> {
    pub reference: &'a Reference,
    pub metrics: &'a MetricsConfig,
    pub samples: usize,
    /// Rounds between evaluations; 0 evaluates only after the last round.
    pub interval: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub rounds: usize,
    pub reports: Vec<RoundReport>,
    /// First round after which both loss curves satisfied the plateau rule.
    pub plateau_round: Option<usize>,
    pub stopped_early: bool,
}

/// Draws `count` hard samples from the global generator with the round's
/// evaluation stream.
pub fn sample_global(
    state: &FederationState,
    cfg: &FederationConfig,
    count: usize,
    temperature: f64,
) -> Result<Vec<MolecularGraph>, FederationError> {
    let mut rng = eval_rng(cfg.seed, state.round);
    Ok(state.gen.sample(count, temperature, &mut rng)?)
}

/// Runs `cfg.rounds` rounds. `on_round` sees the state after each round with
/// its log record and, on evaluation rounds, the metrics report.
pub fn run_training<F>(
    state: &mut FederationState,
    cfg: &FederationConfig,
    eval: Option<EvalPlan<'_>>,
    mut on_round: F,
) -> Result<TrainingSummary, FederationError>
where
    F: FnMut(&FederationState, &RoundRecord, Option<&MetricsReport>) -> Result<(), FederationError>,
{
    let mut summary = TrainingSummary {
        rounds: 0,
        reports: Vec::new(),
        plateau_round: None,
        stopped_early: false,
    };
    for r in 0..cfg.rounds {
        let record = run_round(state, cfg)?;
        summary.rounds += 1;
        let plateau = cfg.plateau.reached(&state.gen_curve()) && cfg.plateau.reached(&state.disc_curve());
        if plateau && summary.plateau_round.is_none() {
            summary.plateau_round = Some(state.round);
            log::info!("loss curves flat after round {}", state.round);
        }
        let last = r + 1 == cfg.rounds || (plateau && cfg.plateau.stop);
        let report = match eval {
            Some(plan) if last || (plan.interval > 0 && state.round.is_multiple_of(plan.interval)) => {
                let samples = sample_global(state, cfg, plan.samples, plan.temperature)?;
                Some(evaluate(&samples, plan.reference, plan.metrics)?)
            }
            _ => None,
        };
        on_round(state, &record, report.as_ref())?;
        if let Some(report) = report {
            summary.reports.push(RoundReport {
                round: state.round,
                report,
            });
        }
        if plateau && cfg.plateau.stop {
            summary.stopped_early = r + 1 < cfg.rounds;
            break;
        }
    }
    Ok(summary)
}
