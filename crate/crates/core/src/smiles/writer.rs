use thiserror::Error;

use crate::molgraph::{canonical_order, is_valid, BondType, MolecularGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WriteError {
    #[error("cannot write an invalid graph")]
    InvalidGraph,
}

/// Writes a valid graph as SMILES.
///
/// The traversal is depth-first from the first node of the canonical order,
/// visiting neighbours by canonical rank, so isomorphic inputs give identical
/// strings.
pub fn write(g: &MolecularGraph) -> Result<String, WriteError> {
    if !is_valid(g) {
        return Err(WriteError::InvalidGraph);
    }
    let g = g.strip_padding();
    let n = g.num_nodes();
    let order = canonical_order(&g).map_err(|_| WriteError::InvalidGraph)?;
    let mut rank = vec![0usize; n];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    let aromatic: Vec<bool> = (0..n)
        .map(|i| g.neighbors(i).any(|(_, b)| b == BondType::Aromatic))
        .collect();

    let mut plan = Plan {
        visited: vec![false; n],
        children: vec![Vec::new(); n],
        opens: vec![Vec::new(); n],
        closes: vec![Vec::new(); n],
    };
    plan.dfs(&g, &rank, order[0], None);

    let mut w = Writer {
        g: &g,
        aromatic: &aromatic,
        plan: &plan,
        digits: Vec::new(),
        ring_digit: Vec::new(),
        out: String::new(),
    };
    w.emit(order[0]);
    Ok(w.out)
}

struct Plan {
    visited: Vec<bool>,
    children: Vec<Vec<usize>>,
    // ring bonds opened at a node: (partner)
    opens: Vec<Vec<usize>>,
    // ring bonds closed at a node: (partner that opened it)
    closes: Vec<Vec<usize>>,
}

impl Plan {
    fn dfs(&mut self, g: &MolecularGraph, rank: &[usize], v: usize, parent: Option<usize>) {
        self.visited[v] = true;
        let mut nbrs: Vec<usize> = g.neighbors(v).map(|(w, _)| w).collect();
        nbrs.sort_by_key(|&w| rank[w]);
        for w in nbrs {
            if Some(w) == parent {
                continue;
            }
            if self.visited[w] {
                // back edge to an ancestor, unless already recorded from below
                if !self.opens[v].contains(&w) {
                    self.opens[w].push(v);
                    self.closes[v].push(w);
                }
            } else {
                self.children[v].push(w);
                self.dfs(g, rank, w, Some(v));
            }
        }
    }
}

struct Writer<'a> {
    g: &'a MolecularGraph,
    aromatic: &'a [bool],
    plan: &'a Plan,
    // digit slots in use: Some((opener, closer))
    digits: Vec<Option<(usize, usize)>>,
    ring_digit: Vec<((usize, usize), usize)>,
    out: String,
}

impl Writer<'_> {
    fn bond_symbol(&self, a: usize, b: usize) -> &'static str {
        match self.g.bond(a, b) {
            BondType::Single if self.aromatic[a] && self.aromatic[b] => "-",
            BondType::Single | BondType::Aromatic | BondType::Zero => "",
            BondType::Double => "=",
            BondType::Triple => "#",
        }
    }

    fn push_digit(&mut self, d: usize) {
        if d < 10 {
            self.out.push(char::from(b'0' + d as u8));
        } else {
            self.out.push_str(&format!("%{d:02}"));
        }
    }

    fn emit(&mut self, v: usize) {
        let sym = self.g.atom(v).symbol();
        if self.aromatic[v] {
            self.out.push_str(&sym.to_ascii_lowercase());
        } else {
            self.out.push_str(sym);
        }
        for &opener in &self.plan.closes[v] {
            let pos = self
                .ring_digit
                .iter()
                .position(|&(e, _)| e == (opener, v))
                .expect("ring opened before it closes");
            let (_, d) = self.ring_digit.remove(pos);
            self.digits[d - 1] = None;
            self.push_digit(d);
        }
        for &closer in &self.plan.opens[v] {
            let slot = match self.digits.iter().position(Option::is_none) {
                Some(s) => s,
                None => {
                    self.digits.push(None);
                    self.digits.len() - 1
                }
            };
            self.digits[slot] = Some((v, closer));
            let d = slot + 1;
            self.ring_digit.push(((v, closer), d));
            let bs = self.bond_symbol(v, closer);
            self.out.push_str(bs);
            self.push_digit(d);
        }
        let children = &self.plan.children[v];
        for (k, &c) in children.iter().enumerate() {
            let last = k + 1 == children.len();
            if !last {
                self.out.push('(');
            }
            let bs = self.bond_symbol(v, c);
            self.out.push_str(bs);
            self.emit(c);
            if !last {
                self.out.push(')');
            }
        }
    }
}
