//! Canonical labelling by colour refinement plus exhaustive individualization.
//!
//! Each connected component is refined to a stable colouring; when colour
//! classes remain, every member of the first non-singleton class is tried in
//! turn and the lexicographically smallest encoding over all discrete leaves
//! wins. Components are then ordered by their encodings.

use super::{GraphError, MolecularGraph, DEFAULT_N_MAX};

/// Canonical byte string: equal iff the padding-free graphs are isomorphic
/// under atom- and bond-type preserving relabelling.
pub fn canonical_key(g: &MolecularGraph) -> Result<Vec<u8>, GraphError> {
    let (_, key) = canonicalize(g)?;
    Ok(key)
}

/// Node indices of the padding-free graph in canonical order.
pub fn canonical_order(g: &MolecularGraph) -> Result<Vec<usize>, GraphError> {
    let (order, _) = canonicalize(g)?;
    Ok(order)
}

fn canonicalize(g: &MolecularGraph) -> Result<(Vec<usize>, Vec<u8>), GraphError> {
    let g = g.strip_padding();
    let n = g.num_nodes();
    if n > DEFAULT_N_MAX {
        return Err(GraphError::TooManyNodes {
            nodes: n,
            limit: DEFAULT_N_MAX,
        });
    }
    let mut parts: Vec<(Vec<u8>, Vec<usize>)> = components(&g)
        .into_iter()
        .map(|comp| {
            let sub = g.induced(&comp);
            let (local, code) = canonical_component(&sub);
            (code, local.into_iter().map(|k| comp[k]).collect())
        })
        .collect();
    parts.sort();
    let mut key = vec![n as u8];
    let mut order = Vec::with_capacity(n);
    for (code, nodes) in parts {
        key.push(0xff);
        key.extend_from_slice(&code);
        order.extend(nodes);
    }
    Ok((order, key))
}

fn components(g: &MolecularGraph) -> Vec<Vec<usize>> {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut k = 0;
        while k < comp.len() {
            let v = comp[k];
            k += 1;
            for (w, _) in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn canonical_component(g: &MolecularGraph) -> (Vec<usize>, Vec<u8>) {
    let n = g.num_nodes();
    let init: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            let mut sig = vec![g.atom(i).index() as u32];
            let mut bonds: Vec<u32> = g.neighbors(i).map(|(_, b)| b.index() as u32).collect();
            bonds.sort_unstable();
            sig.extend(bonds);
            sig
        })
        .collect();
    let colors = refine(g, rank(&init));
    let mut best: Option<(Vec<u8>, Vec<usize>)> = None;
    search(g, colors, &mut best);
    let (code, order) = best.expect("at least one leaf");
    (order, code)
}

fn rank<T: Ord + Clone>(sigs: &[T]) -> Vec<u32> {
    let mut sorted: Vec<T> = sigs.to_vec();
    sorted.sort();
    sorted.dedup();
    sigs.iter()
        .map(|s| sorted.binary_search(s).expect("present") as u32)
        .collect()
}

fn distinct(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn refine(g: &MolecularGraph, mut colors: Vec<u32>) -> Vec<u32> {
    let n = g.num_nodes();
    let mut classes = distinct(&colors);
    loop {
        let sigs: Vec<(u32, Vec<(u32, u32)>)> = (0..n)
            .map(|i| {
                let mut nb: Vec<(u32, u32)> = g.neighbors(i).map(|(j, b)| (b.index() as u32, colors[j])).collect();
                nb.sort_unstable();
                (colors[i], nb)
            })
            .collect();
        let next = rank(&sigs);
        let next_classes = distinct(&next);
        colors = next;
        if next_classes == classes {
            return colors;
        }
        classes = next_classes;
    }
}

fn search(g: &MolecularGraph, colors: Vec<u32>, best: &mut Option<(Vec<u8>, Vec<usize>)>) {
    let n = g.num_nodes();
    let mut counts = vec![0usize; n];
    for &c in &colors {
        counts[c as usize] += 1;
    }
    let Some(target) = (0..n).find(|&c| counts[c] > 1) else {
        let mut order = vec![0usize; n];
        for (i, &c) in colors.iter().enumerate() {
            order[c as usize] = i;
        }
        let code = encode(g, &order);
        if best.as_ref().is_none_or(|(b, _)| code < *b) {
            *best = Some((code, order));
        }
        return;
    };
    let members: Vec<usize> = (0..n).filter(|&i| colors[i] as usize == target).collect();
    for v in members {
        let sigs: Vec<(u32, bool)> = (0..n).map(|i| (colors[i], i != v)).collect();
        let next = refine(g, rank(&sigs));
        search(g, next, best);
    }
}

fn encode(g: &MolecularGraph, order: &[usize]) -> Vec<u8> {
    let n = order.len();
    let mut code = Vec::with_capacity(1 + n + n * (n - 1) / 2);
    code.push(n as u8);
    code.extend(order.iter().map(|&i| g.atom(i).index() as u8));
    for a in 0..n {
        for b in a + 1..n {
            code.push(g.bond(order[a], order[b]).index() as u8);
        }
    }
    code
}

#[cfg(test)]
mod tests {
    use super::super::{AtomType::*, BondType::*};
    use super::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
            if cur.len() == used.len() {
                out.push(cur.clone());
                return;
            }
            for i in 0..used.len() {
                if !used[i] {
                    used[i] = true;
                    cur.push(i);
                    rec(cur, used, out);
                    cur.pop();
                    used[i] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; n], &mut out);
        out
    }

    #[test]
    fn relabelling_invariance() {
        let co = MolecularGraph::from_edges(vec![C, O], &[(0, 1, Single)]).unwrap();
        let oc = MolecularGraph::from_edges(vec![O, C], &[(0, 1, Single)]).unwrap();
        assert_eq!(canonical_key(&co).unwrap(), canonical_key(&oc).unwrap());
    }

    #[test]
    fn bond_type_distinguishes() {
        let single = MolecularGraph::from_edges(vec![C, O], &[(0, 1, Single)]).unwrap();
        let double = MolecularGraph::from_edges(vec![C, O], &[(0, 1, Double)]).unwrap();
        assert_ne!(canonical_key(&single).unwrap(), canonical_key(&double).unwrap());
    }

    #[test]
    fn all_orderings_of_cco_share_one_key() {
        let g = MolecularGraph::from_edges(vec![C, C, O], &[(0, 1, Single), (1, 2, Single)]).unwrap();
        let keys: std::collections::BTreeSet<_> = permutations(3)
            .iter()
            .map(|p| canonical_key(&g.permuted(p)).unwrap())
            .collect();
        assert_eq!(keys.len(), 1);
    }

    #[test]
    fn exhaustive_permutations_of_six_node_graphs() {
        // cyclohexane with a substituent pattern and a branched acyclic graph
        let ring = MolecularGraph::from_edges(
            vec![C, C, N, C, C, O],
            &[
                (0, 1, Single),
                (1, 2, Single),
                (2, 3, Single),
                (3, 4, Single),
                (4, 0, Single),
                (4, 5, Double),
            ],
        )
        .unwrap();
        let benzene = MolecularGraph::from_edges(
            vec![C; 6],
            &[
                (0, 1, Aromatic),
                (1, 2, Aromatic),
                (2, 3, Aromatic),
                (3, 4, Aromatic),
                (4, 5, Aromatic),
                (5, 0, Aromatic),
            ],
        )
        .unwrap();
        for g in [ring, benzene] {
            let k0 = canonical_key(&g).unwrap();
            for p in permutations(6) {
                assert_eq!(canonical_key(&g.permuted(&p)).unwrap(), k0);
            }
        }
    }

    #[test]
    fn non_isomorphic_same_formula_differ() {
        let cco = MolecularGraph::from_edges(vec![C, C, O], &[(0, 1, Single), (1, 2, Single)]).unwrap();
        let coc = MolecularGraph::from_edges(vec![C, O, C], &[(0, 1, Single), (1, 2, Single)]).unwrap();
        assert_ne!(canonical_key(&cco).unwrap(), canonical_key(&coc).unwrap());
    }

    #[test]
    fn padding_is_ignored_and_limit_enforced() {
        let g = MolecularGraph::from_edges(vec![C, O], &[(0, 1, Single)]).unwrap();
        assert_eq!(canonical_key(&g.padded(10)).unwrap(), canonical_key(&g).unwrap());
        assert!(matches!(
            canonical_key(&MolecularGraph::with_atoms(vec![C; 11])),
            Err(GraphError::TooManyNodes { .. })
        ));
    }

    #[test]
    fn symmetric_disconnected_graph_is_fast() {
        let g = MolecularGraph::with_atoms(vec![C; 10]);
        let k = canonical_key(&g).unwrap();
        assert_eq!(k, canonical_key(&g.permuted(&[9, 8, 7, 6, 5, 4, 3, 2, 1, 0])).unwrap());
    }
}
