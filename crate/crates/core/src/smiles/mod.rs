//! SMILES subset reader and writer.
//!
//! Supported: organic-subset atoms `C N O F P S Cl Br I`, aromatic `c n o p s`,
//! bonds `- = # :`, branches and ring closures (`0-9` and `%nn`). Bracket
//! atoms, charges, explicit hydrogens, stereo marks and dot-disconnected
//! fragments are rejected with a typed error.

mod dataset;
mod writer;

pub use dataset::{load_dataset, write_skip_log, Dataset, DatasetError, SkipRecord};
pub use writer::{write, WriteError};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::molgraph::{AtomType, BondType, MolecularGraph, DEFAULT_N_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmilesErrorKind {
    EmptyInput,
    UnsupportedAtom,
    UnbalancedBranch,
    DanglingRingClosure,
    TooManyAtoms,
    InvalidRingBond,
    UnexpectedCharacter,
}

impl fmt::Display for SmilesErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Parse failure with the byte offset of the offending character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct SmilesError {
    pub kind: SmilesErrorKind,
    pub position: usize,
}

impl SmilesError {
    fn new(kind: SmilesErrorKind, position: usize) -> Self {
        Self { kind, position }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Atom { atom: AtomType, aromatic: bool },
    Bond(BondType),
    BranchOpen,
    BranchClose,
    Ring(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmilesToken {
    pub kind: TokenKind,
    pub position: usize,
}

/// Splits `text` into tokens of the supported grammar.
pub fn tokenize(text: &str) -> Result<Vec<SmilesToken>, SmilesError> {
    use SmilesErrorKind::*;
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let pos = i;
        let c = bytes[i];
        let next = bytes.get(i + 1).copied();
        let kind = match c {
            b'C' if next == Some(b'l') => {
                i += 1;
                atom(AtomType::Cl, false)
            }
            b'B' if next == Some(b'r') => {
                i += 1;
                atom(AtomType::Br, false)
            }
            b'C' => atom(AtomType::C, false),
            b'N' => atom(AtomType::N, false),
            b'O' => atom(AtomType::O, false),
            b'F' => atom(AtomType::F, false),
            b'P' => atom(AtomType::P, false),
            b'S' => atom(AtomType::S, false),
            b'I' => atom(AtomType::I, false),
            b'c' => atom(AtomType::C, true),
            b'n' => atom(AtomType::N, true),
            b'o' => atom(AtomType::O, true),
            b'p' => atom(AtomType::P, true),
            b's' => atom(AtomType::S, true),
            b'-' => TokenKind::Bond(BondType::Single),
            b'=' => TokenKind::Bond(BondType::Double),
            b'#' => TokenKind::Bond(BondType::Triple),
            b':' => TokenKind::Bond(BondType::Aromatic),
            b'(' => TokenKind::BranchOpen,
            b')' => TokenKind::BranchClose,
            b'0'..=b'9' => TokenKind::Ring(c - b'0'),
            b'%' => match (next, bytes.get(i + 2).copied()) {
                (Some(a @ b'0'..=b'9'), Some(b @ b'0'..=b'9')) => {
                    i += 2;
                    TokenKind::Ring((a - b'0') * 10 + (b - b'0'))
                }
                _ => return Err(SmilesError::new(UnexpectedCharacter, pos)),
            },
            b'[' => return Err(SmilesError::new(UnsupportedAtom, pos)),
            c if c.is_ascii_alphabetic() => return Err(SmilesError::new(UnsupportedAtom, pos)),
            _ => return Err(SmilesError::new(UnexpectedCharacter, pos)),
        };
        out.push(SmilesToken { kind, position: pos });
        i += 1;
    }
    Ok(out)
}

fn atom(atom: AtomType, aromatic: bool) -> TokenKind {
    TokenKind::Atom { atom, aromatic }
}

/// Parses with the default limit of ten heavy atoms.
pub fn parse(text: &str) -> Result<MolecularGraph, SmilesError> {
    parse_with_limit(text, DEFAULT_N_MAX)
}

/// Parses `text` and pads the result with padding nodes up to `n_max` slots.
pub fn parse_with_limit(text: &str, n_max: usize) -> Result<MolecularGraph, SmilesError> {
    use SmilesErrorKind::*;
    if text.is_empty() {
        return Err(SmilesError::new(EmptyInput, 0));
    }
    let tokens = tokenize(text)?;

    let mut atoms: Vec<AtomType> = Vec::new();
    let mut aromatic: Vec<bool> = Vec::new();
    let mut edges: BTreeMap<(usize, usize), BondType> = BTreeMap::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondType, usize)> = None;
    let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
    let mut rings: BTreeMap<u8, (usize, Option<BondType>, usize)> = BTreeMap::new();
    let mut last_was_open = false;

    let default_bond = |a: bool, b: bool| {
        if a && b {
            BondType::Aromatic
        } else {
            BondType::Single
        }
    };

    for tok in &tokens {
        let pos = tok.position;
        let was_open = std::mem::replace(&mut last_was_open, false);
        match tok.kind {
            TokenKind::Atom { atom, aromatic: aro } => {
                if atoms.len() >= n_max {
                    return Err(SmilesError::new(TooManyAtoms, pos));
                }
                let idx = atoms.len();
                atoms.push(atom);
                aromatic.push(aro);
                match (prev, pending.take()) {
                    (Some(p), bond) => {
                        let b = bond.map_or_else(|| default_bond(aromatic[p], aro), |(b, _)| b);
                        edges.insert((p, idx), b);
                    }
                    (None, Some((_, bpos))) => {
                        return Err(SmilesError::new(UnexpectedCharacter, bpos));
                    }
                    (None, None) => {}
                }
                prev = Some(idx);
            }
            TokenKind::Bond(b) => {
                if pending.is_some() || prev.is_none() {
                    return Err(SmilesError::new(UnexpectedCharacter, pos));
                }
                pending = Some((b, pos));
            }
            TokenKind::BranchOpen => {
                if prev.is_none() || pending.is_some() {
                    return Err(SmilesError::new(UnexpectedCharacter, pos));
                }
                branches.push((prev, pos));
                last_was_open = true;
            }
            TokenKind::BranchClose => {
                if was_open || pending.is_some() {
                    return Err(SmilesError::new(UnexpectedCharacter, pos));
                }
                let (p, _) = branches.pop().ok_or(SmilesError::new(UnbalancedBranch, pos))?;
                prev = p;
            }
            TokenKind::Ring(d) => {
                let Some(cur) = prev else {
                    return Err(SmilesError::new(DanglingRingClosure, pos));
                };
                let bond = pending.take().map(|(b, _)| b);
                if let Some((other, open_bond, _)) = rings.remove(&d) {
                    let b = match (open_bond, bond) {
                        (Some(x), Some(y)) if x != y => {
                            return Err(SmilesError::new(InvalidRingBond, pos));
                        }
                        (Some(x), _) | (None, Some(x)) => x,
                        (None, None) => default_bond(aromatic[other], aromatic[cur]),
                    };
                    let key = (other.min(cur), other.max(cur));
                    if other == cur || edges.contains_key(&key) {
                        return Err(SmilesError::new(InvalidRingBond, pos));
                    }
                    edges.insert(key, b);
                } else {
                    rings.insert(d, (cur, bond, pos));
                }
            }
        }
    }

    if let Some(&(_, pos)) = branches.last() {
        return Err(SmilesError::new(UnbalancedBranch, pos));
    }
    if let Some((_, &(_, _, pos))) = rings.iter().next() {
        return Err(SmilesError::new(DanglingRingClosure, pos));
    }
    if let Some((_, pos)) = pending {
        return Err(SmilesError::new(UnexpectedCharacter, pos));
    }
    if atoms.is_empty() {
        return Err(SmilesError::new(EmptyInput, 0));
    }

    let mut g = MolecularGraph::with_atoms(atoms);
    for ((i, j), b) in edges {
        g.set_bond(i, j, b).expect("parser only bonds distinct heavy atoms");
    }
    Ok(g.padded(n_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{canonical_key, is_valid, NUM_BOND_TYPES};
    use AtomType::*;
    use BondType::*;

    #[test]
    fn linear_chain() {
        let g = parse("CCO").unwrap();
        assert_eq!(g.num_nodes(), 10);
        assert_eq!(&g.atoms()[..3], &[C, C, O]);
        assert_eq!(g.bond(0, 1), Single);
        assert_eq!(g.bond(1, 2), Single);
        assert_eq!(g.bond(0, 2), Zero);
        assert_eq!(g.heavy_atom_count(), 3);
    }

    #[test]
    fn ring_closure() {
        let g = parse("C1CC1").unwrap();
        assert_eq!(g.edges(), vec![(0, 1, Single), (0, 2, Single), (1, 2, Single)]);
    }

    #[test]
    fn benzene_matches_hand_built_tensor() {
        let g = parse("c1ccccc1").unwrap();
        let n = 10;
        let mut expected = vec![0.0f32; n * n * NUM_BOND_TYPES];
        let ring = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)];
        for i in 0..n {
            for j in 0..n {
                let bonded = ring.contains(&(i, j)) || ring.contains(&(j, i));
                let k = if bonded { 4 } else { 0 };
                expected[(i * n + j) * NUM_BOND_TYPES + k] = 1.0;
            }
        }
        assert_eq!(g.adjacency_tensor(), expected);
        assert!(g.atoms()[..6].iter().all(|&a| a == C));
        assert!(g.atoms()[6..].iter().all(|&a| a == Pad));
    }

    #[test]
    fn branches_and_explicit_bonds() {
        let g = parse("CC(=O)O").unwrap();
        assert_eq!(g.edges(), vec![(0, 1, Single), (1, 2, Double), (1, 3, Single)]);
        let g = parse("C#N").unwrap();
        assert_eq!(g.bond(0, 1), Triple);
        let g = parse("c1ccccc1-c1ccccc1");
        assert!(matches!(
            g,
            Err(SmilesError {
                kind: SmilesErrorKind::TooManyAtoms,
                ..
            })
        ));
        let g = parse("ClC(Br)I").unwrap();
        assert_eq!(&g.atoms()[..4], &[Cl, C, Br, I]);
    }

    #[test]
    fn ring_bond_symbol_on_either_side() {
        let a = parse("C=1CCC1").unwrap();
        let b = parse("C1CCC=1").unwrap();
        assert_eq!(a.bond(0, 3), Double);
        assert_eq!(canonical_key(&a).unwrap(), canonical_key(&b).unwrap());
        assert_eq!(parse("C=1CCC#1").unwrap_err().kind, SmilesErrorKind::InvalidRingBond);
    }

    #[test]
    fn typed_errors_with_positions() {
        use SmilesErrorKind::*;
        let cases = [
            ("", EmptyInput, 0),
            ("C(C", UnbalancedBranch, 1),
            ("CC)", UnbalancedBranch, 2),
            ("C1CC", DanglingRingClosure, 1),
            ("CB", UnsupportedAtom, 1),
            ("C[NH4+]", UnsupportedAtom, 1),
            ("Na", UnsupportedAtom, 1),
            ("C.C", UnexpectedCharacter, 1),
            ("C=", UnexpectedCharacter, 1),
            ("=C", UnexpectedCharacter, 0),
            ("C/C=C/C", UnexpectedCharacter, 1),
            ("CCCCCCCCCCC", TooManyAtoms, 10),
            ("C()C", UnexpectedCharacter, 2),
            ("C11", InvalidRingBond, 2),
        ];
        for (s, kind, pos) in cases {
            let err = parse(s).unwrap_err();
            assert_eq!((err.kind, err.position), (kind, pos), "input {s:?}");
        }
    }

    #[test]
    fn percent_ring_labels() {
        let g = parse("C%12CC%12").unwrap();
        assert_eq!(g.bond(0, 2), Single);
    }

    #[test]
    fn parsed_molecules_are_valid() {
        for s in [
            "CCO",
            "c1ccccc1",
            "c1ccncc1",
            "c1ccoc1",
            "c1ccc2ccccc2c1",
            "O=C1CCCCC1",
            "CS(C)(=O)=O",
            "ClC(Cl)(Cl)Cl",
            "C#CC=C",
        ] {
            let g = parse(s).unwrap();
            g.check_invariants().unwrap();
            assert!(is_valid(&g), "{s}");
        }
    }
}
