//! Valence model: implicit hydrogens, aromatic bookkeeping and validity.
//!
//! Aromatic bonds are resolved by a Kekulé assignment: every aromatic atom
//! that still needs a double bond (ring carbons without an exocyclic double
//! bond, two-connected nitrogen and phosphorus) must be matched to exactly one
//! aromatic neighbour. Matched bonds count as double, the rest as single.

use super::{AtomType, BondType, MolecularGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidityOptions {
    /// Reject graphs whose heavy atoms form more than one component.
    pub require_connected: bool,
}

impl Default for ValidityOptions {
    fn default() -> Self {
        Self {
            require_connected: true,
        }
    }
}

/// Chemical validity with the default options.
pub fn is_valid(g: &MolecularGraph) -> bool {
    is_valid_with(g, ValidityOptions::default())
}

pub fn is_valid_with(g: &MolecularGraph, opts: ValidityOptions) -> bool {
    let g = g.strip_padding();
    if g.num_nodes() == 0 {
        return false;
    }
    if opts.require_connected && g.component_count() != 1 {
        return false;
    }
    hydrogen_counts(&g).is_some()
}

/// Implicit hydrogen count per node of a padding-free graph, or `None` when
/// no valence-consistent assignment exists.
///
/// Padding nodes, if present, get a count of zero.
pub fn hydrogen_counts(g: &MolecularGraph) -> Option<Vec<u8>> {
    let n = g.num_nodes();
    let mut aromatic = vec![0u8; n];
    let mut explicit = vec![0u8; n];
    let mut has_multiple = vec![false; n];
    for i in 0..n {
        for (_, b) in g.neighbors(i) {
            match b {
                BondType::Aromatic => aromatic[i] += 1,
                BondType::Double | BondType::Triple => {
                    has_multiple[i] = true;
                    explicit[i] += b.half_order() / 2;
                }
                _ => explicit[i] += b.half_order() / 2,
            }
        }
    }

    let mut needs = vec![false; n];
    for i in 0..n {
        if aromatic[i] == 0 {
            continue;
        }
        let atom = g.atom(i);
        if aromatic[i] < 2 || !atom.can_be_aromatic() {
            return None;
        }
        needs[i] = match atom {
            AtomType::C => !has_multiple[i],
            AtomType::N | AtomType::P => !has_multiple[i] && aromatic[i] + explicit[i] == 2,
            _ => false,
        };
    }

    let mut mate = vec![usize::MAX; n];
    if !kekulize(g, &needs, &mut mate) {
        return None;
    }

    let mut hs = vec![0u8; n];
    for i in 0..n {
        let atom = g.atom(i);
        if atom.is_pad() {
            continue;
        }
        let used = explicit[i] + aromatic[i] + u8::from(mate[i] != usize::MAX);
        let v = atom.valences().iter().copied().find(|&v| v >= used)?;
        hs[i] = v - used;
    }
    Some(hs)
}

/// Perfect matching of the `needs` atoms over aromatic edges, by backtracking.
fn kekulize(g: &MolecularGraph, needs: &[bool], mate: &mut [usize]) -> bool {
    let Some(i) = (0..needs.len()).find(|&i| needs[i] && mate[i] == usize::MAX) else {
        return true;
    };
    let candidates: Vec<usize> = g
        .neighbors(i)
        .filter(|&(j, b)| b == BondType::Aromatic && needs[j] && mate[j] == usize::MAX)
        .map(|(j, _)| j)
        .collect();
    for j in candidates {
        mate[i] = j;
        mate[j] = i;
        if kekulize(g, needs, mate) {
            return true;
        }
        mate[i] = usize::MAX;
        mate[j] = usize::MAX;
    }
    false
}
