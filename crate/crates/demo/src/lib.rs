//! WebAssembly bindings behind the static demo page in `www/`.
//!
//! Each exported function returns a JSON string; the plain Rust versions
//! return serializable structs so they can be tested natively.

use molfed::autodiff::AdamConfig;
use molfed::federation::{run_round, sample_global, FederationConfig, FederationState};
use molfed::gan::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use molfed::metrics::{evaluate, fingerprint, raw_logp, tanimoto, FingerprintConfig, MetricsConfig, Reference};
use molfed::molgraph::{is_valid, MolecularGraph, DEFAULT_N_MAX};
use molfed::smiles::{self, parse_with_limit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest molecule the inspection tools accept.
pub const MAX_ATOMS: usize = 64;

/// Most training rounds one demo request may ask for.
pub const MAX_ROUNDS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inspection {
    pub atoms: usize,
    pub bonds: usize,
    pub formula: String,
    pub valid: bool,
    pub fragments: usize,
    /// Canonical SMILES, when the graph can be written.
    pub canonical: Option<String>,
    pub logp: Option<f64>,
}

pub fn inspect_smiles(text: &str) -> Result<Inspection, String> {
    let g = parse_with_limit(text.trim(), MAX_ATOMS).map_err(|e| e.to_string())?;
    let valid = is_valid(&g);
    Ok(Inspection {
        atoms: g.heavy_atom_count(),
        bonds: g.edges().len(),
        formula: g.molecular_formula().map_err(|e| e.to_string())?,
        valid,
        fragments: g.component_count(),
        canonical: smiles::write(&g).ok(),
        logp: if valid { raw_logp(&g).ok() } else { None },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Similarity {
    pub tanimoto: f64,
    pub bits_a: u32,
    pub bits_b: u32,
    pub shared: usize,
}

pub fn compare_smiles(a: &str, b: &str) -> Result<Similarity, String> {
    let cfg = FingerprintConfig::default();
    let fp = |s: &str| -> Result<_, String> {
        let g = parse_with_limit(s.trim(), MAX_ATOMS).map_err(|e| format!("{s:?}: {e}"))?;
        fingerprint(&g, cfg).map_err(|e| format!("{s:?}: {e}"))
    };
    let (fa, fb) = (fp(a)?, fp(b)?);
    Ok(Similarity {
        tanimoto: tanimoto(&fa, &fb).map_err(|e| e.to_string())?,
        bits_a: fa.count(),
        bits_b: fb.count(),
        shared: fa.bits().filter(|&i| fb.contains(i)).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub smiles: Option<String>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRun {
    pub molecules: usize,
    pub skipped: usize,
    pub gen_curve: Vec<f64>,
    pub disc_curve: Vec<f64>,
    pub samples: Vec<Sample>,
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    pub int_div_1: Option<f64>,
}

/// Trains a small generator over `clients` simulated clients on the given
/// SMILES lines and draws `samples` molecules from the result.
pub fn train_small(text: &str, clients: usize, rounds: usize, seed: u64, samples: usize) -> Result<DemoRun, String> {
    let mut graphs = Vec::new();
    let mut skipped = 0;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match parse_with_limit(line, DEFAULT_N_MAX) {
            Ok(g) => graphs.push(g),
            Err(_) => skipped += 1,
        }
    }
    if rounds > MAX_ROUNDS {
        return Err(format!("at most {MAX_ROUNDS} rounds"));
    }
    let cfg = FederationConfig {
        num_clients: clients,
        epochs_per_round: 10,
        batch_size: 8,
        rounds,
        seed,
        deterministic: true,
        noise_resample: 0,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        ..FederationConfig::default()
    };
    if graphs.len() < cfg.batch_size * clients.max(1) {
        return Err(format!(
            "{} usable molecules; need at least {} for {clients} clients",
            graphs.len(),
            cfg.batch_size * clients.max(1)
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gen = Generator::new(
        GeneratorConfig {
            hidden_dims: vec![32, 64],
            noise_dim: 8,
            n_max: DEFAULT_N_MAX,
            dropout: 0.0,
        },
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let disc_cfg: DiscriminatorConfig = "[16,32],16,[32,1]"
        .parse()
        .map_err(|e: molfed::gan::GanError| e.to_string())?;
    let disc = Discriminator::new(disc_cfg, &mut rng).map_err(|e| e.to_string())?;
    let mut state = FederationState::new(gen, disc, &graphs, &cfg).map_err(|e| e.to_string())?;
    for _ in 0..rounds {
        run_round(&mut state, &cfg).map_err(|e| e.to_string())?;
    }

    let drawn: Vec<MolecularGraph> = sample_global(&state, &cfg, samples, 1.0).map_err(|e| e.to_string())?;
    let mcfg = MetricsConfig::default();
    let report = evaluate(&drawn, &Reference::new(&graphs, &mcfg), &mcfg).map_err(|e| e.to_string())?;
    let samples = drawn
        .iter()
        .map(|g| {
            let valid = is_valid(g) && g.component_count() == 1;
            Sample {
                smiles: if valid { smiles::write(g).ok() } else { None },
                valid,
            }
        })
        .collect();
    Ok(DemoRun {
        molecules: graphs.len(),
        skipped,
        gen_curve: state.gen_curve(),
        disc_curve: state.disc_curve(),
        samples,
        validity: report.validity,
        uniqueness: report.uniqueness,
        novelty: report.novelty,
        int_div_1: report.int_div_1,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn inspect(text: &str) -> Result<String, JsError> {
    to_js(inspect_smiles(text))
}

#[wasm_bindgen]
pub fn similarity(a: &str, b: &str) -> Result<String, JsError> {
    to_js(compare_smiles(a, b))
}

#[wasm_bindgen]
pub fn train(text: &str, clients: usize, rounds: usize, seed: u32, samples: usize) -> Result<String, JsError> {
    to_js(train_small(text, clients, rounds, u64::from(seed), samples))
}
