//! Federated adversarial training of molecular graph generators.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod federation;
pub mod gan;
pub mod metrics;
pub mod molgraph;
pub mod seed;
pub mod smiles;
