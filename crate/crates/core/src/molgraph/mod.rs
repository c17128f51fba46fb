//! Heavy-atom molecular graphs with typed nodes and typed edges.
//!
//! A graph holds `n` node slots. Each slot carries one of ten atom types
//! (nine elements plus the padding symbol) and each unordered slot pair carries
//! one of five bond types. The dense one-hot views used by the networks
//! (`V`, shape `n x 10`, and `A`, shape `n x n x 5`) are derived on demand.

mod canon;
mod valence;

pub use canon::{canonical_key, canonical_order};
pub use valence::{hydrogen_counts, is_valid, is_valid_with, ValidityOptions};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Default maximum number of node slots per graph.
pub const DEFAULT_N_MAX: usize = 10;
/// Number of atom types, padding included.
pub const NUM_ATOM_TYPES: usize = 10;
/// Number of bond types, the zero bond included.
pub const NUM_BOND_TYPES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has {nodes} heavy atoms, more than the limit of {limit}")]
    TooManyNodes { nodes: usize, limit: usize },
    #[error("graph is not a valid molecule")]
    Invalid,
    #[error("malformed graph: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomType {
    C,
    N,
    O,
    F,
    Br,
    P,
    S,
    Cl,
    I,
    Pad,
}

impl AtomType {
    pub const ALL: [AtomType; NUM_ATOM_TYPES] = [
        AtomType::C,
        AtomType::N,
        AtomType::O,
        AtomType::F,
        AtomType::Br,
        AtomType::P,
        AtomType::S,
        AtomType::Cl,
        AtomType::I,
        AtomType::Pad,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<AtomType> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            AtomType::C => "C",
            AtomType::N => "N",
            AtomType::O => "O",
            AtomType::F => "F",
            AtomType::Br => "Br",
            AtomType::P => "P",
            AtomType::S => "S",
            AtomType::Cl => "Cl",
            AtomType::I => "I",
            AtomType::Pad => "*",
        }
    }

    pub fn from_symbol(s: &str) -> Option<AtomType> {
        Self::ALL.iter().copied().find(|a| a.symbol() == s)
    }

    /// Allowed total valences, smallest first. Empty for padding.
    pub fn valences(self) -> &'static [u8] {
        match self {
            AtomType::C => &[4],
            AtomType::N => &[3],
            AtomType::O => &[2],
            AtomType::F | AtomType::Br | AtomType::Cl | AtomType::I => &[1],
            AtomType::P => &[3, 5],
            AtomType::S => &[2, 4, 6],
            AtomType::Pad => &[],
        }
    }

    pub fn is_pad(self) -> bool {
        self == AtomType::Pad
    }

    /// Whether the element may be written as a lowercase aromatic atom.
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            AtomType::C | AtomType::N | AtomType::O | AtomType::P | AtomType::S
        )
    }
}

impl fmt::Display for AtomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum BondType {
    #[default]
    Zero,
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondType {
    pub const ALL: [BondType; NUM_BOND_TYPES] = [
        BondType::Zero,
        BondType::Single,
        BondType::Double,
        BondType::Triple,
        BondType::Aromatic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<BondType> {
        Self::ALL.get(i).copied()
    }

    /// Bond order in half units (aromatic = 3, i.e. 1.5).
    pub fn half_order(self) -> u8 {
        match self {
            BondType::Zero => 0,
            BondType::Single => 2,
            BondType::Double => 4,
            BondType::Triple => 6,
            BondType::Aromatic => 3,
        }
    }

    pub fn order(self) -> f64 {
        f64::from(self.half_order()) / 2.0
    }

    pub fn is_bond(self) -> bool {
        self != BondType::Zero
    }
}

/// Molecular graph over `n` node slots.
///
/// The bond matrix is stored densely and kept symmetric with a zero diagonal;
/// edges touching a padding slot are always [`BondType::Zero`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MolecularGraph {
    atoms: Vec<AtomType>,
    bonds: Vec<BondType>,
}

impl MolecularGraph {
    pub fn empty() -> Self {
        Self::with_atoms(Vec::new())
    }

    /// Graph with the given atoms and no bonds.
    pub fn with_atoms(atoms: Vec<AtomType>) -> Self {
        let n = atoms.len();
        Self {
            atoms,
            bonds: vec![BondType::Zero; n * n],
        }
    }

    /// All-padding graph with `n` slots.
    pub fn padding(n: usize) -> Self {
        Self::with_atoms(vec![AtomType::Pad; n])
    }

    /// Builds a graph from atoms and an undirected edge list.
    pub fn from_edges(atoms: Vec<AtomType>, edges: &[(usize, usize, BondType)]) -> Result<Self, GraphError> {
        let mut g = Self::with_atoms(atoms);
        for &(i, j, b) in edges {
            g.set_bond(i, j, b)?;
        }
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[AtomType] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> AtomType {
        self.atoms[i]
    }

    pub fn bond(&self, i: usize, j: usize) -> BondType {
        self.bonds[i * self.atoms.len() + j]
    }

    pub fn set_bond(&mut self, i: usize, j: usize, b: BondType) -> Result<(), GraphError> {
        let n = self.atoms.len();
        if i >= n || j >= n {
            return Err(GraphError::Malformed(format!(
                "bond ({i},{j}) out of range for {n} nodes"
            )));
        }
        if i == j && b.is_bond() {
            return Err(GraphError::Malformed(format!("self bond on node {i}")));
        }
        if b.is_bond() && (self.atoms[i].is_pad() || self.atoms[j].is_pad()) {
            return Err(GraphError::Malformed(format!("bond ({i},{j}) touches a padding node")));
        }
        self.bonds[i * n + j] = b;
        self.bonds[j * n + i] = b;
        Ok(())
    }

    /// Neighbors of `i` with their bond types, in index order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, BondType)> + '_ {
        let n = self.atoms.len();
        self.bonds[i * n..(i + 1) * n]
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_bond())
            .map(|(j, &b)| (j, b))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Undirected edge list `(i, j, bond)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, BondType)> {
        let n = self.atoms.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let b = self.bond(i, j);
                if b.is_bond() {
                    out.push((i, j, b));
                }
            }
        }
        out
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| !a.is_pad()).count()
    }

    pub fn is_all_padding(&self) -> bool {
        self.heavy_atom_count() == 0
    }

    /// Induced subgraph on the non-padding nodes, renumbered in order.
    pub fn strip_padding(&self) -> MolecularGraph {
        let keep: Vec<usize> = (0..self.num_nodes()).filter(|&i| !self.atoms[i].is_pad()).collect();
        if keep.len() == self.num_nodes() {
            return self.clone();
        }
        self.induced(&keep)
    }

    /// Subgraph induced by `nodes`, in the given order.
    pub fn induced(&self, nodes: &[usize]) -> MolecularGraph {
        let atoms = nodes.iter().map(|&i| self.atoms[i]).collect();
        let mut g = MolecularGraph::with_atoms(atoms);
        let m = nodes.len();
        for a in 0..m {
            for b in 0..m {
                g.bonds[a * m + b] = self.bond(nodes[a], nodes[b]);
            }
        }
        g
    }

    /// Relabels nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.num_nodes(), "permutation length");
        self.induced(perm)
    }

    /// Appends padding slots up to `n` nodes. Graphs already at or above `n`
    /// are returned unchanged.
    pub fn padded(&self, n: usize) -> MolecularGraph {
        let cur = self.num_nodes();
        if cur >= n {
            return self.clone();
        }
        let mut atoms = self.atoms.clone();
        atoms.resize(n, AtomType::Pad);
        let mut g = MolecularGraph::with_atoms(atoms);
        for i in 0..cur {
            for j in 0..cur {
                g.bonds[i * n + j] = self.bond(i, j);
            }
        }
        g
    }

    /// Row-major one-hot node-label matrix, shape `n x 10`.
    pub fn node_matrix(&self) -> Vec<f32> {
        let mut v = vec![0.0; self.num_nodes() * NUM_ATOM_TYPES];
        for (i, a) in self.atoms.iter().enumerate() {
            v[i * NUM_ATOM_TYPES + a.index()] = 1.0;
        }
        v
    }

    /// Row-major one-hot adjacency tensor, shape `n x n x 5`.
    pub fn adjacency_tensor(&self) -> Vec<f32> {
        let mut a = vec![0.0; self.bonds.len() * NUM_BOND_TYPES];
        for (k, b) in self.bonds.iter().enumerate() {
            a[k * NUM_BOND_TYPES + b.index()] = 1.0;
        }
        a
    }

    /// Decodes one-hot (or arg-max of soft) `V` and `A` buffers into a graph.
    ///
    /// Symmetry is taken from the upper triangle, the diagonal is forced to the
    /// zero bond and edges touching padding are dropped, so the result always
    /// satisfies the graph invariants.
    pub fn from_dense(n: usize, nodes: &[f32], adjacency: &[f32]) -> Result<Self, GraphError> {
        if nodes.len() != n * NUM_ATOM_TYPES || adjacency.len() != n * n * NUM_BOND_TYPES {
            return Err(GraphError::Malformed(format!(
                "dense buffers of length {}/{} do not match {n} nodes",
                nodes.len(),
                adjacency.len()
            )));
        }
        let atoms: Vec<AtomType> = nodes
            .chunks(NUM_ATOM_TYPES)
            .map(|row| AtomType::ALL[argmax(row)])
            .collect();
        let mut g = MolecularGraph::with_atoms(atoms);
        for i in 0..n {
            for j in i + 1..n {
                let off = (i * n + j) * NUM_BOND_TYPES;
                let b = BondType::ALL[argmax(&adjacency[off..off + NUM_BOND_TYPES])];
                if g.atoms[i].is_pad() || g.atoms[j].is_pad() {
                    continue;
                }
                g.bonds[i * n + j] = b;
                g.bonds[j * n + i] = b;
            }
        }
        Ok(g)
    }

    /// Checks the structural invariants of the representation.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        let n = self.num_nodes();
        if self.bonds.len() != n * n {
            return Err(GraphError::Malformed("bond matrix size".into()));
        }
        for i in 0..n {
            if self.bond(i, i).is_bond() {
                return Err(GraphError::Malformed(format!("diagonal bond at {i}")));
            }
            for j in 0..n {
                if self.bond(i, j) != self.bond(j, i) {
                    return Err(GraphError::Malformed(format!("asymmetric at ({i},{j})")));
                }
                if self.bond(i, j).is_bond() && (self.atoms[i].is_pad() || self.atoms[j].is_pad()) {
                    return Err(GraphError::Malformed(format!("padding bond at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    /// Number of connected components among non-padding nodes.
    pub fn component_count(&self) -> usize {
        let n = self.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (i, j, _) in self.edges() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
            }
        }
        (0..n)
            .filter(|&i| !self.atoms[i].is_pad())
            .filter(|&i| find(&mut parent, i) == i)
            .count()
    }

    /// Molecular formula with implicit hydrogens.
    ///
    /// With carbon present the Hill order applies (C, H, then alphabetical).
    /// Without carbon, heavy elements are listed alphabetically and hydrogen
    /// comes last, so ammonia renders as `NH3`.
    pub fn molecular_formula(&self) -> Result<String, GraphError> {
        let g = self.strip_padding();
        let hs = hydrogen_counts(&g).ok_or(GraphError::Invalid)?;
        let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
        for a in g.atoms() {
            *counts.entry(a.symbol()).or_default() += 1;
        }
        let h: usize = hs.iter().map(|&x| usize::from(x)).sum();
        let mut out = String::new();
        let push = |out: &mut String, sym: &str, c: usize| {
            if c == 0 {
                return;
            }
            out.push_str(sym);
            if c > 1 {
                out.push_str(&c.to_string());
            }
        };
        if let Some(c) = counts.remove("C") {
            push(&mut out, "C", c);
            push(&mut out, "H", h);
            for (sym, c) in counts {
                push(&mut out, sym, c);
            }
        } else {
            for (sym, c) in counts {
                push(&mut out, sym, c);
            }
            push(&mut out, "H", h);
        }
        Ok(out)
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
