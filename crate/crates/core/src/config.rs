//! Experiment configuration: a flat, versioned TOML document.
//!
//! Loading starts from the built-in defaults (or a named preset), overlays
//! the keys present in the file and rejects any key it does not know.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AdamConfig;
use crate::federation::{FederationConfig, Partition, PlateauRule, Weighting};
use crate::gan::{DiscriminatorConfig, EpsilonMode, GeneratorConfig, LossForm, TrainOptions};
use crate::metrics::{FingerprintConfig, LogpBounds, MetricsConfig};
use crate::molgraph::DEFAULT_N_MAX;

pub const CONFIG_VERSION: i64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config has no `version` key")]
    MissingVersion,
    #[error("config version {0} is not supported (expected {CONFIG_VERSION})")]
    UnsupportedVersion(i64),
    #[error("unknown preset {0:?} (expected esol, qm8 or qm9)")]
    UnknownPreset(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
    #[error("sweep needs exactly one axis with at least two values: {0}")]
    MultipleSweepAxes(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Esol,
    Qm8,
    Qm9,
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "esol" => Ok(Preset::Esol),
            "qm8" => Ok(Preset::Qm8),
            "qm9" => Ok(Preset::Qm9),
            _ => Err(ConfigError::UnknownPreset(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionKind {
    Iid,
    Noniid,
}

impl fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionKind::Iid => "IID",
            PartitionKind::Noniid => "non-IID",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,

    pub dataset: PathBuf,
    /// CSV column holding SMILES; `None` auto-detects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_column: Option<String>,
    pub dataset_name: String,
    pub split: [f64; 3],
    pub split_seed: u64,
    pub n_max: usize,

    pub generator_dims: Vec<usize>,
    pub noise_dim: usize,
    pub discriminator_dims: String,
    pub dropout_gen: f64,
    pub dropout_disc: f64,

    pub clients: usize,
    pub partition: PartitionKind,
    pub alpha: f64,
    pub weighting: Weighting,
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub rounds: usize,

    pub gamma: f64,
    /// Fixed interpolation weight; `None` draws it uniformly per sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_fixed: Option<f64>,
    pub loss_form: LossForm,
    pub temperature: f64,
    pub straight_through: bool,
    pub noise_resample: u64,

    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lr_decay_interval: u64,
    pub lr_decay_factor: f64,

    pub seed: u64,
    pub deterministic: bool,

    pub eval_interval: usize,
    pub eval_samples: usize,
    pub snn_sample_size: usize,
    pub fingerprint_bits: usize,
    pub fingerprint_radius: usize,
    pub logp_low: f64,
    pub logp_high: f64,
    pub require_connected: bool,

    pub checkpoint_interval: usize,
    pub plateau_window: usize,
    pub plateau_threshold: f64,
    pub stop_on_plateau: bool,

    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_discriminator_dims: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_clients: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_dropout: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            preset: None,
            dataset: PathBuf::from("data/solubility.csv"),
            dataset_column: None,
            dataset_name: "ESOL".into(),
            split: [0.8, 0.1, 0.1],
            split_seed: 0,
            n_max: DEFAULT_N_MAX,
            generator_dims: vec![32, 128],
            noise_dim: 16,
            discriminator_dims: "[32,64],32,[64,1]".into(),
            dropout_gen: 0.0,
            dropout_disc: 0.0,
            clients: 4,
            partition: PartitionKind::Iid,
            alpha: 0.5,
            weighting: Weighting::Samples,
            epochs_per_round: 1000,
            batch_size: 16,
            rounds: 100,
            gamma: 10.0,
            epsilon_fixed: None,
            loss_form: LossForm::Wgan,
            temperature: 1.0,
            straight_through: true,
            noise_resample: 1000,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            lr_decay_interval: 1000,
            lr_decay_factor: 100.0,
            seed: 0,
            deterministic: false,
            eval_interval: 0,
            eval_samples: 256,
            snn_sample_size: 1000,
            fingerprint_bits: 2048,
            fingerprint_radius: 2,
            logp_low: -2.12,
            logp_high: 6.26,
            require_connected: true,
            checkpoint_interval: 0,
            plateau_window: 10,
            plateau_threshold: 0.05,
            stop_on_plateau: false,
            sweep_discriminator_dims: Vec::new(),
            sweep_clients: Vec::new(),
            sweep_dropout: Vec::new(),
        }
    }
}

/// Which setting a sweep varies.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    DiscriminatorDims(Vec<String>),
    Clients(Vec<usize>),
    Dropout(Vec<f64>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::DiscriminatorDims(v) => v.len(),
            SweepAxis::Clients(v) => v.len(),
            SweepAxis::Dropout(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point `i` of the sweep applied to `base`; sweep keys are cleared.
    pub fn apply(&self, base: &ExperimentConfig, i: usize) -> ExperimentConfig {
        let mut c = base.clone();
        c.sweep_discriminator_dims.clear();
        c.sweep_clients.clear();
        c.sweep_dropout.clear();
        match self {
            SweepAxis::DiscriminatorDims(v) => c.discriminator_dims = v[i].clone(),
            SweepAxis::Clients(v) => c.clients = v[i],
            SweepAxis::Dropout(v) => {
                c.dropout_gen = v[i];
                c.dropout_disc = v[i];
            }
        }
        c
    }

    pub fn label(&self, i: usize) -> String {
        match self {
            SweepAxis::DiscriminatorDims(v) => format!("disc-{}", v[i]),
            SweepAxis::Clients(v) => format!("clients-{}", v[i]),
            SweepAxis::Dropout(v) => format!("dropout-{}", v[i]),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let base = Self {
            preset: Some(p),
            ..Self::default()
        };
        match p {
            Preset::Esol => base,
            Preset::Qm8 => Self {
                dataset: PathBuf::from("data/qm8.csv"),
                dataset_name: "QM8".into(),
                generator_dims: vec![32, 64, 128],
                discriminator_dims: "[64,128],64,[128,1]".into(),
                ..base
            },
            Preset::Qm9 => Self {
                dataset: PathBuf::from("data/qm9.csv"),
                dataset_name: "QM9".into(),
                generator_dims: vec![64, 128, 256],
                discriminator_dims: "[256,512],256,[512,1]".into(),
                noise_resample: 100,
                ..base
            },
        }
    }

    /// Parses a config document and validates it.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let version = user
            .get("version")
            .ok_or(ConfigError::MissingVersion)?
            .as_integer()
            .ok_or_else(|| ConfigError::Invalid("`version` must be an integer".into()))?;
        if version != CONFIG_VERSION {
            return Err(ConfigError::UnsupportedVersion(version));
        }
        let base = match user.get("preset") {
            None => Self::default(),
            Some(v) => {
                let name = v
                    .as_str()
                    .ok_or_else(|| ConfigError::Invalid("`preset` must be a string".into()))?;
                Self::preset(name.parse()?)
            }
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        merged.extend(user);
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The effective config with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::UnsupportedVersion(self.version));
        }
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 || self.split[0] == 0.0 {
            return bad(format!(
                "split {:?} must be non-negative, sum to 1 and keep a training part",
                self.split
            ));
        }
        if self.n_max == 0 || self.n_max > DEFAULT_N_MAX {
            return bad(format!("n_max {} must be in 1..={DEFAULT_N_MAX}", self.n_max));
        }
        if self.dataset_name.is_empty() {
            return bad("dataset_name is empty".into());
        }
        for (name, p) in [("dropout_gen", self.dropout_gen), ("dropout_disc", self.dropout_disc)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} {p} must be in [0, 1)"));
            }
        }
        self.generator_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.discriminator_config()?;
        if self.clients == 0 || self.epochs_per_round == 0 || self.batch_size == 0 {
            return bad("clients, epochs_per_round and batch_size must be >= 1".into());
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha {} must be > 0", self.alpha));
        }
        self.train_options()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("lr {} must be > 0 and betas in [0, 1)", self.lr));
        }
        if !(self.lr_decay_factor >= 1.0) {
            return bad(format!("lr_decay_factor {} must be >= 1", self.lr_decay_factor));
        }
        if self.fingerprint_bits == 0 {
            return bad("fingerprint_bits must be >= 1".into());
        }
        if !(self.logp_low < self.logp_high) {
            return bad(format!("logp bounds {} .. {} are empty", self.logp_low, self.logp_high));
        }
        if !(self.plateau_threshold >= 0.0) {
            return bad(format!("plateau_threshold {} must be >= 0", self.plateau_threshold));
        }
        for d in &self.sweep_discriminator_dims {
            d.parse::<DiscriminatorConfig>()
                .map_err(|e| ConfigError::Invalid(format!("sweep layout {d:?}: {e}")))?;
        }
        if self.sweep_clients.contains(&0) {
            return bad("sweep_clients values must be >= 1".into());
        }
        if self.sweep_dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad("sweep_dropout values must be in [0, 1)".into());
        }
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            hidden_dims: self.generator_dims.clone(),
            noise_dim: self.noise_dim,
            n_max: self.n_max,
            dropout: self.dropout_gen,
        }
    }

    pub fn discriminator_config(&self) -> Result<DiscriminatorConfig, ConfigError> {
        let mut d: DiscriminatorConfig = self
            .discriminator_dims
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("discriminator_dims: {e}")))?;
        d.n_max = self.n_max;
        d.dropout = self.dropout_disc;
        d.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(d)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            gamma: self.gamma,
            epsilon: self.epsilon_fixed.map_or(EpsilonMode::Uniform, EpsilonMode::Fixed),
            loss_form: self.loss_form,
            temperature: self.temperature,
            straight_through: self.straight_through,
        }
    }

    pub fn federation_config(&self) -> FederationConfig {
        FederationConfig {
            num_clients: self.clients,
            epochs_per_round: self.epochs_per_round,
            batch_size: self.batch_size,
            rounds: self.rounds,
            partition: match self.partition {
                PartitionKind::Iid => Partition::Iid,
                PartitionKind::Noniid => Partition::NonIid { alpha: self.alpha },
            },
            weighting: self.weighting,
            seed: self.seed,
            deterministic: self.deterministic,
            train: self.train_options(),
            adam: AdamConfig {
                lr: self.lr as f32,
                beta1: self.beta1 as f32,
                beta2: self.beta2 as f32,
                eps: 1e-8,
                lr_decay_interval: self.lr_decay_interval,
                lr_decay_factor: self.lr_decay_factor as f32,
            },
            noise_resample: self.noise_resample,
            plateau: PlateauRule {
                window: self.plateau_window,
                threshold: self.plateau_threshold,
                stop: self.stop_on_plateau,
            },
        }
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig {
            fingerprint: FingerprintConfig {
                width: self.fingerprint_bits,
                radius: self.fingerprint_radius,
            },
            snn_sample_size: self.snn_sample_size,
            logp_bounds: LogpBounds {
                low: self.logp_low,
                high: self.logp_high,
            },
            seed: self.seed,
            require_connected: self.require_connected,
        }
    }

    /// The single sweep axis, or an error when zero or several are set or
    /// the axis has fewer than two values.
    pub fn sweep_axis(&self) -> Result<SweepAxis, ConfigError> {
        let axes: Vec<SweepAxis> = [
            SweepAxis::DiscriminatorDims(self.sweep_discriminator_dims.clone()),
            SweepAxis::Clients(self.sweep_clients.clone()),
            SweepAxis::Dropout(self.sweep_dropout.clone()),
        ]
        .into_iter()
        .filter(|a| !a.is_empty())
        .collect();
        match axes.as_slice() {
            [axis] if axis.len() >= 2 => Ok(axis.clone()),
            [axis] => Err(ConfigError::MultipleSweepAxes(format!(
                "the axis has only {} value",
                axis.len()
            ))),
            [] => Err(ConfigError::MultipleSweepAxes("no sweep axis is set".into())),
            _ => Err(ConfigError::MultipleSweepAxes(format!("{} axes are set", axes.len()))),
        }
    }
}
