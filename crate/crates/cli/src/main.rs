//! `groundgram`: generate corpora, train, evaluate and aggregate runs.

mod config;
mod eval;
mod manifest;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use groundgram::scenegen::{generate_corpus, make_splits, read_corpus, write_corpus, write_items, GenConfig};
use groundgram::trainer::{ScheduleKind, TrainConfig, Trainer};

use manifest::{sha256_file, RunManifest, CONFIG_FILE, METRICS_FILE};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<groundgram::Error> for CliError {
    fn from(e: groundgram::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Parser, Debug)]
#[command(name = "groundgram", version, about = "Visually grounded compound PCFG induction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene/caption corpus and its matching items.
    GenData(GenDataArgs),
    /// Train one schedule on a corpus.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one task.
    Eval(eval::EvalArgs),
    /// Aggregate several run directories into tables, curves and t-tests.
    Report(report::ReportArgs),
}

#[derive(clap::Args, Debug)]
struct GenDataArgs {
    #[arg(long, default_value_t = 400)]
    n_scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    heldout_per_class: usize,
    /// Standard deviation of the degraded-vector noise.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 5)]
    captions_per_scene: usize,
    /// Corpus file; item files are written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// joint | syntax-first | semantics-first | visual-labels
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    switch_epoch: Option<usize>,
    /// in-distribution | out-of-distribution
    #[arg(long)]
    regime: Option<String>,
    /// Flat key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

/// `c.jsonl` -> `c.<suffix>.jsonl`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.jsonl"))
}

fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let config = GenConfig {
        n_scenes: a.n_scenes,
        captions_per_scene: a.captions_per_scene,
        heldout_per_class: a.heldout_per_class,
        noise: a.noise,
        seed: a.seed,
        ..GenConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let corpus = generate_corpus(&config)?;
    let splits = make_splits(&corpus)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_corpus(&a.out, &corpus)?;
    write_items(&sibling(&a.out, "verb-items"), &splits.verb_items)?;
    write_items(&sibling(&a.out, "verb-items-indist"), &splits.verb_items_indist)?;
    write_items(&sibling(&a.out, "role-items"), &splits.role_items)?;
    println!(
        "{} items ({} train, {} held-out test, {} in-distribution test); held-out stems: {}",
        corpus.items.len(),
        splits.train.len(),
        splits.test_outdist.len(),
        splits.test_indist.len(),
        config.heldout_stems().join(" ")
    );
    Ok(())
}

fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = &a.config {
        config::apply_file(&mut cfg, p)?;
    }
    if let Some(s) = &a.schedule {
        cfg.schedule = s.parse::<ScheduleKind>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.switch_epoch {
        cfg.switch_epoch = Some(s);
    }
    if let Some(r) = &a.regime {
        config::set(&mut cfg, "regime", r)?;
    }
    for kv in &a.overrides {
        config::apply_override(&mut cfg, kv)?;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_train_config(a)?;
    let corpus = read_corpus(&a.corpus)?;
    create_dir(&a.out)?;
    write_file(&a.out.join(CONFIG_FILE), &config::render(&cfg))?;
    let mut trainer = Trainer::new(&corpus, cfg.clone())?;
    let quiet = a.quiet;
    let saved = trainer.run(Some(&a.out), |r| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  loss {:.3} (syntax {:.3}, semantics {:.3})  F1 {:.3}  V {:.3}  verb {:.3}  role {:.3}",
                r.epoch, r.loss_total, r.loss_syntax, r.loss_semantics, r.span_f1, r.v_measure, r.verb_match, r.role_match
            );
        }
    })?;
    let manifest = RunManifest {
        config_hash: sha256_file(&a.out.join(CONFIG_FILE))?,
        seed: cfg.seed,
        schedule: cfg.schedule.name().to_string(),
        corpus: a.corpus.clone(),
        corpus_hash: sha256_file(&a.corpus)?,
        checkpoints: saved
            .iter()
            .map(|p| p.file_name().map(PathBuf::from).unwrap_or_else(|| p.clone()))
            .collect(),
        metrics: PathBuf::from(METRICS_FILE),
    };
    manifest.save(&a.out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval::run(a),
        Command::Report(a) => report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("groundgram: {e}");
            ExitCode::from(e.code())
        }
    }
}
