use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Dirichlet;
use serde::{Deserialize, Serialize};

use super::FederationError;
use crate::molgraph::MolecularGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into train/validation/test by `ratios`.
pub fn split_dataset(n: usize, ratios: [f64; 3], seed: u64) -> Result<Split, FederationError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(FederationError::BadRatios(ratios));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let n_val = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Ok(Split {
        train: order,
        validation,
        test,
    })
}

/// Class label used by the partitioners; graphs without a formula share one class.
pub fn formula_labels(graphs: &[MolecularGraph]) -> Vec<String> {
    graphs
        .iter()
        .map(|g| g.molecular_formula().unwrap_or_else(|_| "?".to_string()))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Partition {
    #[default]
    Iid,
    /// Per-class client shares drawn from a symmetric Dirichlet.
    NonIid { alpha: f64 },
}

fn classes<'a, L: Ord>(train: &[usize], labels: &'a [L]) -> BTreeMap<&'a L, Vec<usize>> {
    let mut map: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (&i, l) in train.iter().zip(labels) {
        map.entry(l).or_default().push(i);
    }
    map
}

fn check(train: &[usize], labels_len: usize, k: usize) -> Result<(), FederationError> {
    if k == 0 {
        return Err(FederationError::InvalidConfig("at least one client is required".into()));
    }
    if train.len() != labels_len {
        return Err(FederationError::InvalidConfig(format!(
            "{} training items but {labels_len} labels",
            train.len()
        )));
    }
    Ok(())
}

fn finish(mut parts: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for p in &mut parts {
        p.sort_unstable();
    }
    parts
}

/// Deals every class round-robin over `k` clients after a seeded shuffle.
///
/// `labels[i]` is the class of `train[i]`. The dealing position carries over
/// from one class to the next so client totals stay balanced too. Each
/// returned set is sorted.
pub fn partition_iid<L: Ord>(
    train: &[usize],
    labels: &[L],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, FederationError> {
    check(train, labels.len(), k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = vec![Vec::new(); k];
    let mut next = 0;
    for (_, mut members) in classes(train, labels) {
        members.shuffle(&mut rng);
        for i in members {
            parts[next].push(i);
            next = (next + 1) % k;
        }
    }
    Ok(finish(parts))
}

/// Per class, draws client shares from Dirichlet(`alpha`) and assigns each
/// member to a client sampled from those shares.
pub fn partition_noniid<L: Ord>(
    train: &[usize],
    labels: &[L],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>, FederationError> {
    check(train, labels.len(), k)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(FederationError::InvalidConfig(format!("alpha {alpha} must be > 0")));
    }
    if k == 1 {
        return Ok(vec![finish(vec![train.to_vec()]).remove(0)]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirichlet =
        Dirichlet::new(&vec![alpha; k]).map_err(|e| FederationError::InvalidConfig(format!("alpha {alpha}: {e}")))?;
    let mut parts = vec![Vec::new(); k];
    for (_, members) in classes(train, labels) {
        let shares = dirichlet.sample(&mut rng);
        match WeightedIndex::new(&shares) {
            Ok(pick) => {
                for i in members {
                    parts[pick.sample(&mut rng)].push(i);
                }
            }
            // all shares underflowed to zero
            Err(_) => {
                for i in members {
                    parts[rng.gen_range(0..k)].push(i);
                }
            }
        }
    }
    Ok(finish(parts))
}
