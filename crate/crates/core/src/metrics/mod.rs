//! Evaluation of generated molecule sets: validity, uniqueness, novelty,
//! internal diversity, nearest-neighbour similarity and a logP estimate.
//!
//! Everything except validity is computed over the valid subset only.

mod fingerprint;
mod logp;
mod table;

pub use fingerprint::{atom_invariants, fingerprint, tanimoto, Fingerprint, FingerprintConfig};
pub use logp::{atom_keys, heavy_contribution, hydrogen_contribution, raw_logp, AtomKey, LogpBounds};
pub use table::{render_table, table_header, TableRow};

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{canonical_key, is_valid, is_valid_with, MolecularGraph, ValidityOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("fingerprint widths differ ({0} vs {1})")]
    WidthMismatch(usize, usize),
    #[error("graph is not a valid molecule")]
    InvalidGraph,
    #[error("metric needs at least one molecule")]
    EmptySet,
    #[error("reference set is empty")]
    EmptyReference,
}

/// Percentage of graphs that are valid molecules; 0 for an empty input.
pub fn validity(generated: &[MolecularGraph]) -> f64 {
    if generated.is_empty() {
        log::warn!("validity of an empty set");
        return 0.0;
    }
    let ok = generated.iter().filter(|g| is_valid(g)).count();
    100.0 * ok as f64 / generated.len() as f64
}

fn keys(valid: &[MolecularGraph]) -> Result<Vec<Vec<u8>>, MetricsError> {
    valid
        .iter()
        .map(|g| canonical_key(g).map_err(|_| MetricsError::InvalidGraph))
        .collect()
}

/// Percentage of distinct molecules among `valid`; 0 for an empty input.
pub fn uniqueness(valid: &[MolecularGraph]) -> Result<f64, MetricsError> {
    if valid.is_empty() {
        log::warn!("uniqueness of an empty set");
        return Ok(0.0);
    }
    let distinct: HashSet<Vec<u8>> = keys(valid)?.into_iter().collect();
    Ok(100.0 * distinct.len() as f64 / valid.len() as f64)
}

/// Percentage of `valid` whose canonical key is absent from `reference`.
pub fn novelty(valid: &[MolecularGraph], reference: &HashSet<Vec<u8>>) -> Result<f64, MetricsError> {
    if valid.is_empty() {
        log::warn!("novelty of an empty set");
        return Ok(0.0);
    }
    let novel = keys(valid)?.iter().filter(|k| !reference.contains(*k)).count();
    Ok(100.0 * novel as f64 / valid.len() as f64)
}

/// `1 - (mean over all ordered pairs, self-pairs included, of T^p)^(1/p)`.
pub fn int_div(fps: &[Fingerprint], p: u32) -> Result<f64, MetricsError> {
    if fps.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut total = 0.0;
    for a in fps {
        for b in fps {
            total += tanimoto(a, b)?.powi(p as i32);
        }
    }
    let mean = total / (fps.len() * fps.len()) as f64;
    let root = match p {
        1 => mean,
        2 => mean.sqrt(),
        _ => mean.powf(1.0 / f64::from(p)),
    };
    Ok(1.0 - root)
}

/// Mean over `generated` of the best similarity to any reference fingerprint.
pub fn snn(generated: &[Fingerprint], reference: &[Fingerprint]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    if generated.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut total = 0.0;
    for g in generated {
        let mut best = 0.0f64;
        for r in reference {
            best = best.max(tanimoto(g, r)?);
        }
        total += best;
    }
    Ok(total / generated.len() as f64)
}

/// Mean similarity over all generated/reference pairs.
pub fn asim(generated: &[Fingerprint], reference: &[Fingerprint]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    if generated.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut total = 0.0;
    for g in generated {
        for r in reference {
            total += tanimoto(g, r)?;
        }
    }
    Ok(total / (generated.len() * reference.len()) as f64)
}

/// Mean normalized logP over `valid`.
pub fn logp(valid: &[MolecularGraph], bounds: LogpBounds) -> Result<f64, MetricsError> {
    if valid.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut total = 0.0;
    for g in valid {
        total += bounds.normalize(raw_logp(g)?);
    }
    Ok(total / valid.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub fingerprint: FingerprintConfig,
    /// Reference molecules drawn for the nearest-neighbour similarity.
    pub snn_sample_size: usize,
    pub logp_bounds: LogpBounds,
    pub seed: u64,
    /// Count multi-fragment graphs as invalid.
    pub require_connected: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            fingerprint: FingerprintConfig::default(),
            snn_sample_size: 1000,
            logp_bounds: LogpBounds::default(),
            seed: 0,
            require_connected: true,
        }
    }
}

/// Training-set data needed for novelty and similarity.
#[derive(Debug, Clone)]
pub struct Reference {
    pub keys: HashSet<Vec<u8>>,
    /// Fingerprints of a seeded subsample used for similarity.
    pub sample: Vec<Fingerprint>,
}

impl Reference {
    pub fn new(train: &[MolecularGraph], cfg: &MetricsConfig) -> Self {
        let keys = train.iter().filter_map(|g| canonical_key(g).ok()).collect();
        let valid: Vec<&MolecularGraph> = train.iter().filter(|g| is_valid(g)).collect();
        let take = cfg.snn_sample_size.min(valid.len());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picks = rand::seq::index::sample(&mut rng, valid.len(), take).into_vec();
        picks.sort_unstable();
        let sample = picks
            .into_iter()
            .filter_map(|i| fingerprint(valid[i], cfg.fingerprint).ok())
            .collect();
        Self { keys, sample }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub generated: usize,
    pub valid: usize,
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    pub int_div_1: Option<f64>,
    pub int_div_2: Option<f64>,
    pub snn: Option<f64>,
    pub asim: Option<f64>,
    pub logp_normalized: Option<f64>,
    /// Not computed; kept so reports line up with the published tables.
    pub qed: Option<f64>,
    /// Percentage of generated graphs with no heavy atom at all.
    pub all_pad_fraction: f64,
    pub warnings: Vec<String>,
}

pub fn evaluate(
    generated: &[MolecularGraph],
    reference: &Reference,
    cfg: &MetricsConfig,
) -> Result<MetricsReport, MetricsError> {
    let mut warnings = Vec::new();
    let opts = ValidityOptions {
        require_connected: cfg.require_connected,
    };
    let valid: Vec<MolecularGraph> = generated.iter().filter(|g| is_valid_with(g, opts)).cloned().collect();
    if generated.is_empty() {
        warnings.push("no molecules generated".to_string());
    } else if valid.is_empty() {
        warnings.push("no valid molecules".to_string());
    }
    let pads = generated.iter().filter(|g| g.is_all_padding()).count();
    let all_pad_fraction = if generated.is_empty() {
        0.0
    } else {
        100.0 * pads as f64 / generated.len() as f64
    };

    let fps = valid
        .iter()
        .map(|g| fingerprint(g, cfg.fingerprint))
        .collect::<Result<Vec<_>, _>>()?;
    let (int_div_1, int_div_2, logp_normalized) = if valid.is_empty() {
        (None, None, None)
    } else {
        (
            Some(int_div(&fps, 1)?),
            Some(int_div(&fps, 2)?),
            Some(logp(&valid, cfg.logp_bounds)?),
        )
    };
    let (snn_v, asim_v) = if valid.is_empty() {
        (None, None)
    } else if reference.sample.is_empty() {
        warnings.push("empty reference sample".to_string());
        (None, None)
    } else {
        (
            Some(snn(&fps, &reference.sample)?),
            Some(asim(&fps, &reference.sample)?),
        )
    };

    Ok(MetricsReport {
        generated: generated.len(),
        valid: valid.len(),
        validity: if generated.is_empty() {
            0.0
        } else {
            100.0 * valid.len() as f64 / generated.len() as f64
        },
        uniqueness: uniqueness(&valid)?,
        novelty: novelty(&valid, &reference.keys)?,
        int_div_1,
        int_div_2,
        snn: snn_v,
        asim: asim_v,
        logp_normalized,
        qed: None,
        all_pad_fraction,
        warnings,
    })
}
