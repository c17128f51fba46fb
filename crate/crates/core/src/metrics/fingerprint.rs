//! Circular (extended-connectivity style) fingerprints.
//!
//! Initial atom invariant: (element, degree, summed bond order). Each round
//! rehashes an atom's invariant with the sorted (bond, neighbour invariant)
//! pairs. Every invariant of every round sets bit `hash % width`. Hashing is
//! a fixed splitmix64 mixer, so bits are stable across platforms.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::molgraph::{hydrogen_counts, MolecularGraph};
use crate::seed::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerprintConfig {
    pub width: usize,
    pub radius: usize,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        Self { width: 2048, radius: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    width: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn empty(width: usize) -> Self {
        Self {
            width,
            words: vec![0; width.div_ceil(64)],
        }
    }

    /// Builds a fingerprint from explicit bit positions.
    pub fn from_bits(width: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Self::empty(width);
        for b in bits {
            fp.set(b % width);
        }
        fp
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn contains(&self, bit: usize) -> bool {
        bit < self.width && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.contains(b))
    }

    fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }
}

fn combine(h: u64, x: u64) -> u64 {
    splitmix64(h ^ splitmix64(x))
}

/// Atom invariants after each round, `rounds[r][atom]`, for a padding-free graph.
pub fn atom_invariants(g: &MolecularGraph, radius: usize) -> Vec<Vec<u64>> {
    let n = g.num_nodes();
    let mut current: Vec<u64> = (0..n)
        .map(|i| {
            let order: u64 = g.neighbors(i).map(|(_, b)| u64::from(b.half_order())).sum();
            let mut h = combine(0x5EED, g.atom(i).index() as u64);
            h = combine(h, g.degree(i) as u64);
            combine(h, order)
        })
        .collect();
    let mut rounds = vec![current.clone()];
    for r in 1..=radius {
        let next = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = g.neighbors(i).map(|(j, b)| (b.index() as u64, current[j])).collect();
                env.sort_unstable();
                let mut h = combine(r as u64, current[i]);
                for (b, inv) in env {
                    h = combine(combine(h, b), inv);
                }
                h
            })
            .collect();
        current = next;
        rounds.push(current.clone());
    }
    rounds
}

pub fn fingerprint(g: &MolecularGraph, cfg: FingerprintConfig) -> Result<Fingerprint, MetricsError> {
    let g = g.strip_padding();
    if g.num_nodes() == 0 || hydrogen_counts(&g).is_none() {
        return Err(MetricsError::InvalidGraph);
    }
    if cfg.width == 0 {
        return Err(MetricsError::WidthMismatch(0, 0));
    }
    let mut fp = Fingerprint::empty(cfg.width);
    for round in atom_invariants(&g, cfg.radius) {
        for inv in round {
            fp.set((inv % cfg.width as u64) as usize);
        }
    }
    Ok(fp)
}

/// `|a & b| / |a | b|`, 1 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, MetricsError> {
    if a.width != b.width {
        return Err(MetricsError::WidthMismatch(a.width, b.width));
    }
    let mut inter = 0u32;
    let mut union = 0u32;
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(inter) / f64::from(union))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse;

    fn fp(s: &str) -> Fingerprint {
        fingerprint(&parse(s).unwrap(), FingerprintConfig::default()).unwrap()
    }

    #[test]
    fn permutation_invariant() {
        let g = parse("CC(=O)Nc1ccccc1").unwrap();
        let n = g.num_nodes();
        let perm: Vec<usize> = (0..n).rev().collect();
        let cfg = FingerprintConfig::default();
        assert_eq!(
            fingerprint(&g, cfg).unwrap(),
            fingerprint(&g.permuted(&perm), cfg).unwrap()
        );
        assert_eq!(fingerprint(&g.padded(10), cfg).unwrap(), fingerprint(&g, cfg).unwrap());
    }

    #[test]
    fn element_matters() {
        assert_ne!(fp("C"), fp("N"));
        // one invariant per round for a lone atom
        assert!(fp("C").count() <= 3);
    }

    #[test]
    fn topology_matters() {
        // radius-0 invariants already differ: a two-connected C versus a two-connected O
        let cco = parse("CCO").unwrap();
        let coc = parse("COC").unwrap();
        let r0 = |g: &MolecularGraph| {
            let mut v = atom_invariants(g, 0).remove(0);
            v.sort_unstable();
            v
        };
        assert_ne!(r0(&cco), r0(&coc));
        assert_ne!(fp("CCO"), fp("COC"));
    }

    #[test]
    fn tanimoto_cases() {
        let a = Fingerprint::from_bits(64, [1, 2]);
        let b = Fingerprint::from_bits(64, [1, 2, 3, 4]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        assert_eq!(tanimoto(&a, &Fingerprint::from_bits(64, [7])).unwrap(), 0.0);
        assert_eq!(tanimoto(&Fingerprint::empty(64), &Fingerprint::empty(64)).unwrap(), 1.0);
        assert!(matches!(
            tanimoto(&a, &Fingerprint::empty(128)),
            Err(MetricsError::WidthMismatch(64, 128))
        ));
    }

    #[test]
    fn invalid_graph_is_rejected() {
        let g = MolecularGraph::padding(4);
        assert!(matches!(
            fingerprint(&g, FingerprintConfig::default()),
            Err(MetricsError::InvalidGraph)
        ));
    }
}
