//! Saving and restoring a generator/critic pair.
//!
//! Layer sizes are not stored separately; they are read back from the
//! parameter names and shapes. Dropout ratios are training-time settings and
//! come back as zero.

use std::collections::HashMap;

use super::{Discriminator, DiscriminatorConfig, GanError, Generator, GeneratorConfig};
use crate::autodiff::checkpoint;
use crate::autodiff::Tensor;
use crate::molgraph::NUM_ATOM_TYPES;

pub fn encode(gen: &Generator, disc: &Discriminator) -> Vec<u8> {
    let named: Vec<(String, Tensor)> = gen
        .names()
        .into_iter()
        .zip(gen.params.iter().cloned())
        .chain(disc.names().into_iter().zip(disc.params.iter().cloned()))
        .collect();
    checkpoint::encode(&named)
}

pub fn decode(bytes: &[u8]) -> Result<(Generator, Discriminator), GanError> {
    let records = checkpoint::decode(bytes)?;
    let table: HashMap<&str, &Tensor> = records.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let shape = |name: &str| -> Result<&[usize], GanError> {
        table
            .get(name)
            .map(|t| t.shape())
            .ok_or_else(|| GanError::ArchitectureMismatch(format!("missing parameter {name}")))
    };
    let width = |name: &str, axis: usize| -> Result<usize, GanError> {
        shape(name)?
            .get(axis)
            .copied()
            .ok_or_else(|| GanError::ArchitectureMismatch(format!("{name} has too few axes")))
    };

    let mut hidden_dims = Vec::new();
    while table.contains_key(format!("gen.hidden.{}.weight", hidden_dims.len()).as_str()) {
        hidden_dims.push(width(&format!("gen.hidden.{}.weight", hidden_dims.len()), 1)?);
    }
    if hidden_dims.is_empty() {
        return Err(GanError::ArchitectureMismatch("no generator layers".into()));
    }
    let noise_dim = width("gen.hidden.0.weight", 0)?;
    let node_cols = width("gen.nodes.weight", 1)?;
    let n_max = node_cols / NUM_ATOM_TYPES;
    if n_max * NUM_ATOM_TYPES != node_cols {
        return Err(GanError::ArchitectureMismatch(format!(
            "node head width {node_cols} is not a multiple of {NUM_ATOM_TYPES}"
        )));
    }
    let gen_cfg = GeneratorConfig {
        hidden_dims,
        noise_dim,
        n_max,
        dropout: 0.0,
    };

    let mut conv_dims = Vec::new();
    while table.contains_key(format!("disc.conv.{}.self.weight", conv_dims.len()).as_str()) {
        conv_dims.push(width(&format!("disc.conv.{}.self.weight", conv_dims.len()), 1)?);
    }
    let disc_cfg = DiscriminatorConfig {
        conv_dims,
        reduce_dim: width("disc.reduce.weight", 1)?,
        head_dim: width("disc.gate.weight", 1)?,
        n_max,
        dropout: 0.0,
    };

    let take = |names: Vec<String>| -> Result<Vec<Tensor>, GanError> {
        names
            .iter()
            .map(|n| {
                table
                    .get(n.as_str())
                    .map(|t| (*t).clone())
                    .ok_or_else(|| GanError::ArchitectureMismatch(format!("missing parameter {n}")))
            })
            .collect()
    };
    let gen_names = Generator {
        config: gen_cfg.clone(),
        params: Vec::new(),
    }
    .names();
    let disc_names = Discriminator {
        config: disc_cfg.clone(),
        params: Vec::new(),
    }
    .names();
    if gen_names.len() + disc_names.len() != records.len() {
        return Err(GanError::ArchitectureMismatch(format!(
            "{} records for a layout of {} tensors",
            records.len(),
            gen_names.len() + disc_names.len()
        )));
    }
    let gen = Generator::from_params(gen_cfg, take(gen_names)?)?;
    let disc = Discriminator::from_params(disc_cfg, take(disc_names)?)?;
    Ok((gen, disc))
}
