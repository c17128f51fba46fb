//! Reduced atom-contribution logP estimate.
//!
//! Each heavy atom is looked up by (element, aromatic, has heteroatom
//! neighbour, implicit hydrogens) in [`heavy_contribution`]; each implicit
//! hydrogen adds [`hydrogen_contribution`] of its parent element. Values follow
//! the Wildman–Crippen atom classes closest to each key. The raw estimate is
//! mapped onto `[0, 1]` by clipped linear scaling over [`LogpBounds`].

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::molgraph::{hydrogen_counts, AtomType, BondType, MolecularGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogpBounds {
    pub low: f64,
    pub high: f64,
}

impl Default for LogpBounds {
    fn default() -> Self {
        Self { low: -2.12, high: 6.26 }
    }
}

impl LogpBounds {
    pub fn normalize(&self, raw: f64) -> f64 {
        ((raw - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
    }
}

/// Lookup key of one heavy atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AtomKey {
    pub element: AtomType,
    pub aromatic: bool,
    pub hetero_neighbors: usize,
    pub hydrogens: u8,
}

pub fn heavy_contribution(k: AtomKey) -> f64 {
    use AtomType::*;
    let hetero = k.hetero_neighbors > 0;
    match (k.element, k.aromatic) {
        (C, false) => match (hetero, k.hydrogens >= 2) {
            (false, true) => 0.1441,
            (false, false) => 0.0,
            (true, true) => -0.2035,
            (true, false) => -0.2051,
        },
        (C, true) => {
            if hetero {
                0.1360
            } else if k.hydrogens == 0 {
                0.2955
            } else {
                0.1581
            }
        }
        (N, true) => -0.4806,
        (N, false) => match k.hydrogens {
            0 => -0.3187,
            1 => -0.7096,
            _ => -1.0190,
        },
        (O, true) => 0.1552,
        (O, false) => {
            if k.hydrogens > 0 {
                -0.2893
            } else {
                -0.1526
            }
        }
        (F, _) => 0.4202,
        (Cl, _) => 0.6895,
        (Br, _) => 0.8456,
        (I, _) => 0.8857,
        (P, _) => 0.8612,
        (S, true) => 0.6237,
        (S, false) => 0.6482,
        (Pad, _) => 0.0,
    }
}

pub fn hydrogen_contribution(parent: AtomType) -> f64 {
    match parent {
        AtomType::N => 0.2142,
        AtomType::O => -0.2677,
        _ => 0.1230,
    }
}

/// Lookup keys for every heavy atom of a padding-free valid graph.
pub fn atom_keys(g: &MolecularGraph) -> Result<Vec<AtomKey>, MetricsError> {
    let g = g.strip_padding();
    if g.num_nodes() == 0 {
        return Err(MetricsError::InvalidGraph);
    }
    let hs = hydrogen_counts(&g).ok_or(MetricsError::InvalidGraph)?;
    Ok((0..g.num_nodes())
        .map(|i| AtomKey {
            element: g.atom(i),
            aromatic: g.neighbors(i).any(|(_, b)| b == BondType::Aromatic),
            hetero_neighbors: g.neighbors(i).filter(|&(j, _)| g.atom(j) != AtomType::C).count(),
            hydrogens: hs[i],
        })
        .collect())
}

/// Unnormalized estimate for one molecule.
pub fn raw_logp(g: &MolecularGraph) -> Result<f64, MetricsError> {
    Ok(atom_keys(g)?
        .into_iter()
        .map(|k| heavy_contribution(k) + f64::from(k.hydrogens) * hydrogen_contribution(k.element))
        .sum())
}
