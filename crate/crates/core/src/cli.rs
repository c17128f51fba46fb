//! Command-line verbs: `train`, `eval`, `sweep` and `dump-samples`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::federation::{run_training, split_dataset, EvalPlan, FederationError, FederationState};
use crate::gan::{persist, Discriminator, GanError, Generator};
use crate::metrics::{evaluate, render_table, MetricsError, MetricsReport, Reference, TableRow};
use crate::molgraph::{is_valid, MolecularGraph};
use crate::smiles::{self, load_dataset, write_skip_log, DatasetError};

/// Default root for run directories when `--out` is not given.
pub const OUT_ENV: &str = "MOLFED_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("no usable molecules in {0}")]
    EmptyDataset(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dataset(_) | CliError::EmptyDataset(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "molfed", version, about = "Federated graph GAN training for small molecules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Runs clients sequentially for bitwise-reproducible results.
    #[arg(long)]
    pub deterministic: bool,
    /// Output directory (or file, for `eval` and `dump-samples`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Federated training run.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Scores a checkpoint against the training split of the config's dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 256)]
        samples: usize,
    },
    /// One training run per value of the config's sweep axis.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Writes generated molecules as SMILES, one per line.
    DumpSamples {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
    },
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.deterministic |= common.deterministic;
    Ok(cfg)
}

fn default_out(name: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(name)
}

/// Parsed dataset and its training split.
pub struct TrainingData {
    pub train: Vec<MolecularGraph>,
    pub scanned: usize,
    pub skipped: Vec<smiles::SkipRecord>,
}

pub fn load_training_data(cfg: &ExperimentConfig) -> Result<TrainingData, CliError> {
    let ds = load_dataset(&cfg.dataset, cfg.dataset_column.as_deref(), cfg.n_max)?;
    if ds.graphs.is_empty() {
        return Err(CliError::EmptyDataset(cfg.dataset.clone()));
    }
    let split = split_dataset(ds.graphs.len(), cfg.split, cfg.split_seed)?;
    let train: Vec<MolecularGraph> = split.train.iter().map(|&i| ds.graphs[i].clone()).collect();
    if train.is_empty() {
        return Err(CliError::EmptyDataset(cfg.dataset.clone()));
    }
    Ok(TrainingData {
        train,
        scanned: ds.scanned,
        skipped: ds.skipped,
    })
}

/// Final report of a training run, free of timing data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub generator_dims: String,
    pub discriminator_dims: String,
    pub clients: usize,
    pub partition: String,
    pub dropout_gen: f64,
    pub dropout_disc: f64,
    pub seed: u64,
    pub round: usize,
    pub plateau_round: Option<usize>,
    pub metrics: MetricsReport,
}

impl RunReport {
    pub fn row(&self) -> TableRow {
        TableRow {
            dataset: self.dataset.clone(),
            generator_dims: self.generator_dims.clone(),
            discriminator_dims: self.discriminator_dims.clone(),
            clients: self.clients,
            report: self.metrics.clone(),
        }
    }
}

fn dims(d: &[usize]) -> String {
    let parts: Vec<String> = d.iter().map(usize::to_string).collect();
    format!("[{}]", parts.join(","))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

fn series(curve: &[f64]) -> String {
    let mut s = String::from("round\tloss\n");
    for (i, v) in curve.iter().enumerate() {
        s.push_str(&format!("{}\t{v}\n", i + 1));
    }
    s
}

/// Trains per `cfg` and writes every artifact under `out`.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let data = load_training_data(cfg)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let mut skip_log = Vec::new();
    write_skip_log(&mut skip_log, &data.skipped).map_err(io_err(out))?;
    write_atomic(&out.join("skipped.tsv"), &skip_log)?;
    log::info!(
        "{}: {} records, {} parsed, {} in the training split",
        cfg.dataset.display(),
        data.scanned,
        data.scanned - data.skipped.len(),
        data.train.len()
    );

    let fed = cfg.federation_config();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(cfg.seed, &[3]));
    let gen = Generator::new(cfg.generator_config(), &mut rng)?;
    let disc = Discriminator::new(cfg.discriminator_config()?, &mut rng)?;
    let mut state = FederationState::new(gen, disc, &data.train, &fed)?;

    let mcfg = cfg.metrics_config();
    let reference = Reference::new(&data.train, &mcfg);
    let plan = EvalPlan {
        reference: &reference,
        metrics: &mcfg,
        samples: cfg.eval_samples,
        interval: cfg.eval_interval,
        temperature: cfg.temperature,
    };

    let mut log_text = String::new();
    let summary = run_training(&mut state, &fed, Some(plan), |state, record, report| {
        let wrap = |e: CliError| FederationError::Observer(e.to_string());
        log_text.push_str(&serde_json::to_string(record).expect("record serializes"));
        log_text.push('\n');
        write_atomic(&out.join("rounds.jsonl"), log_text.as_bytes()).map_err(wrap)?;
        if cfg.checkpoint_interval > 0 && state.round % cfg.checkpoint_interval == 0 {
            let p = out.join("checkpoints").join(format!("round-{:04}.ckpt", state.round));
            write_atomic(&p, &persist::encode(&state.gen, &state.disc)).map_err(wrap)?;
        }
        if let Some(r) = report {
            let p = out.join("reports").join(format!("round-{:04}.json", state.round));
            write_atomic(&p, &json(r)).map_err(wrap)?;
        }
        log::info!(
            "round {}: gen {:.4} disc {:.4} ({} ms)",
            record.round,
            record.global_gen_loss,
            record.global_disc_loss,
            record.wall_ms
        );
        Ok(())
    })?;
    if summary.rounds == 0 {
        write_atomic(&out.join("rounds.jsonl"), b"")?;
    }

    write_atomic(&out.join("loss_gen.tsv"), series(&state.gen_curve()).as_bytes())?;
    write_atomic(&out.join("loss_disc.tsv"), series(&state.disc_curve()).as_bytes())?;
    write_atomic(&out.join("final.ckpt"), &persist::encode(&state.gen, &state.disc))?;

    let metrics = match summary.reports.last() {
        Some(r) => r.report.clone(),
        None => {
            let samples = crate::federation::sample_global(&state, &fed, cfg.eval_samples, cfg.temperature)?;
            evaluate(&samples, &reference, &mcfg)?
        }
    };
    let report = RunReport {
        dataset: cfg.dataset_name.clone(),
        generator_dims: dims(&cfg.generator_dims),
        discriminator_dims: cfg.discriminator_config()?.layout(),
        clients: cfg.clients,
        partition: cfg.partition.to_string(),
        dropout_gen: cfg.dropout_gen,
        dropout_disc: cfg.dropout_disc,
        seed: cfg.seed,
        round: state.round,
        plateau_round: summary.plateau_round,
        metrics,
    };
    write_atomic(&out.join("report.json"), &json(&report))?;
    write_atomic(&out.join("report.txt"), render_table(&[report.row()]).as_bytes())?;
    Ok(report)
}

/// Runs `train` for every point of the sweep axis and tabulates the results.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<RunReport>, String), CliError> {
    let axis = cfg.sweep_axis()?;
    let mut reports = Vec::with_capacity(axis.len());
    for i in 0..axis.len() {
        let point = axis.apply(cfg, i);
        point.validate()?;
        reports.push(train(&point, &out.join(axis.label(i)))?);
    }
    let rows: Vec<TableRow> = reports.iter().map(RunReport::row).collect();
    let table = render_table(&rows);
    write_atomic(&out.join("sweep.txt"), table.as_bytes())?;
    write_atomic(&out.join("sweep.json"), &json(&reports))?;
    Ok((reports, table))
}

pub fn load_checkpoint(path: &Path) -> Result<(Generator, Discriminator), CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(persist::decode(&bytes)?)
}

/// Scores `samples` hard samples from a checkpoint.
pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path, samples: usize, seed: u64) -> Result<MetricsReport, CliError> {
    let (gen, _) = load_checkpoint(checkpoint)?;
    let data = load_training_data(cfg)?;
    let mcfg = cfg.metrics_config();
    let reference = Reference::new(&data.train, &mcfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs = gen.sample(samples, cfg.temperature, &mut rng)?;
    if graphs.is_empty() {
        log::warn!("no samples requested");
    }
    Ok(evaluate(&graphs, &reference, &mcfg)?)
}

fn describe_invalid(g: &MolecularGraph) -> String {
    let g = g.strip_padding();
    if g.num_nodes() == 0 {
        return "*".to_string();
    }
    g.atoms().iter().map(|a| a.symbol()).collect::<Vec<_>>().join(".")
}

/// One line per sample: SMILES, or the atom list with a `# invalid` suffix.
pub fn dump_samples(checkpoint: &Path, n: usize, seed: u64, temperature: f64) -> Result<String, CliError> {
    let (gen, _) = load_checkpoint(checkpoint)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for g in gen.sample(n, temperature, &mut rng)? {
        match smiles::write(&g) {
            Ok(s) if is_valid(&g) => out.push_str(&s),
            _ => {
                out.push_str(&describe_invalid(&g));
                out.push_str(" # invalid");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| default_out(&format!("train-{}-{}", cfg.dataset_name.to_lowercase(), cfg.seed)));
            let report = train(&cfg, &out)?;
            print!("{}", render_table(&[report.row()]));
            println!("run directory: {}", out.display());
        }
        Command::Sweep { common } => {
            let cfg = load_config(&common)?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| default_out(&format!("sweep-{}-{}", cfg.dataset_name.to_lowercase(), cfg.seed)));
            let (_, table) = sweep(&cfg, &out)?;
            print!("{table}");
        }
        Command::Eval {
            common,
            checkpoint,
            samples,
        } => {
            let cfg = load_config(&common)?;
            let report = eval(&cfg, &checkpoint, samples, cfg.seed)?;
            let row = TableRow {
                dataset: cfg.dataset_name.clone(),
                generator_dims: dims(&cfg.generator_dims),
                discriminator_dims: cfg.discriminator_config()?.layout(),
                clients: cfg.clients,
                report: report.clone(),
            };
            print!("{}", render_table(&[row]));
            let body = json(&report);
            match &common.out {
                Some(p) => write_atomic(p, &body)?,
                None => print!("{}", String::from_utf8_lossy(&body)),
            }
        }
        Command::DumpSamples {
            common,
            checkpoint,
            n,
            temperature,
        } => {
            let text = dump_samples(&checkpoint, n, common.seed.unwrap_or(0), temperature)?;
            match &common.out {
                Some(p) => write_atomic(p, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code,
/// printing a one-line diagnostic on failure.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
