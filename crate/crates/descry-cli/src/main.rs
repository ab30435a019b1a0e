//! `descry`: corpus synthesis, descriptor training, and evaluation runs
//! that reproduce bit-for-bit from their flags.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::{parse_size, parse_threshold_range, RunConfig, CONFIG_VERSION};

#[derive(Parser)]
#[command(
    name = "descry",
    version,
    about = "Self-supervised local descriptors: generate corpora, train, evaluate",
    propagate_version = true
)]
struct Cli {
    /// JSON run config; flags override its values [default: built-in config]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads, 0 = all cores. Outputs never depend on this.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic PPM corpus plus manifest.json
    GenCorpus {
        /// Output directory [default: paths.corpus from config]
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Images to render [default: corpus.count = 64]
        #[arg(long, value_name = "N")]
        count: Option<usize>,
        /// Image size [default: corpus.width x corpus.height = 256x256]
        #[arg(long, value_parser = parse_size, value_name = "WxH")]
        size: Option<(usize, usize)>,
        /// Master seed; image i uses seed ^ i [default: corpus.seed = 0]
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
        /// Foreground elements per image [default: corpus.elements = 24]
        #[arg(long, value_name = "E")]
        elements: Option<usize>,
        /// Overwrite a non-empty output directory
        #[arg(long)]
        force: bool,
    },
    /// Train a descriptor model; writes a checkpoint and an epoch log
    Train {
        /// Corpus directory [default: paths.corpus from config]
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        /// Checkpoint output path [default: paths.checkpoint from config]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Negative-pool corpus directory, required iff the strategy is
        /// coarse_to_fine_top_k [default: paths.pool from config]
        #[arg(long, value_name = "DIR")]
        pool: Option<PathBuf>,
        /// Epoch log path [default: checkpoint path + .log.jsonl]
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
        /// Override train.seed [default: train.seed = 0]
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
    },
    /// Match held-out pairs; reports MMA, homography rate, precision, recall
    EvalMatching {
        /// Model checkpoint [default: paths.checkpoint from config]
        #[arg(long, value_name = "FILE")]
        ckpt: Option<PathBuf>,
        /// Corpus directory [default: paths.corpus from config]
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        /// Held-out pairs to build [default: matching.pairs = 20]
        #[arg(long, value_name = "N")]
        pairs: Option<usize>,
        /// Evaluation seed, namespaced away from training
        /// [default: matching.seed = 0]
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
        /// Inclusive MMA pixel thresholds
        /// [default: matching.thresholds = 1..10]
        #[arg(long, value_parser = parse_threshold_range, value_name = "LO..HI")]
        thresholds: Option<(usize, usize)>,
        /// Correctness distance in px [default: matching.pixel_thresh = 3]
        #[arg(long, value_name = "PX")]
        pixel_thresh: Option<f64>,
        /// Report prefix, writes PREFIX.json and PREFIX.txt
        /// [default: paths.out, else matching_report]
        #[arg(long, value_name = "PREFIX")]
        out: Option<PathBuf>,
        /// Score exact ground-truth labels instead of the model; every
        /// metric must saturate, isolating protocol from model quality
        #[arg(long)]
        oracle: bool,
    },
    /// Retrieve synthetic scenes by global descriptor, re-rank by inliers
    EvalRetrieval {
        /// Model checkpoint [default: paths.checkpoint from config]
        #[arg(long, value_name = "FILE")]
        ckpt: Option<PathBuf>,
        /// Scene count [default: retrieval.scenes = 8]
        #[arg(long, value_name = "G")]
        scenes: Option<usize>,
        /// Views per scene [default: retrieval.views = 4]
        #[arg(long, value_name = "V")]
        views: Option<usize>,
        /// Gallery seed [default: retrieval.seed = 0]
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
        /// Report prefix, writes PREFIX.json and PREFIX.txt
        /// [default: paths.out, else retrieval_report]
        #[arg(long, value_name = "PREFIX")]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Validation(vec![format!("cannot read config {}: {e}", path.display())])
    })?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Validation(vec![format!("config {}: {e}", path.display())])
    })?;
    if cfg.version != CONFIG_VERSION {
        return Err(CliError::Validation(vec![format!(
            "config version must be {CONFIG_VERSION}, got {}",
            cfg.version
        )]));
    }
    Ok(cfg)
}

/// Folds command flags into the run config so one resolved document drives
/// the command and lands in its artifacts.
fn dispatch(command: Command, mut cfg: RunConfig) -> Result<(), CliError> {
    match command {
        Command::GenCorpus { out, count, size, seed, elements, force } => {
            if out.is_some() {
                cfg.paths.corpus = out;
            }
            if let Some(count) = count {
                cfg.corpus.count = count;
            }
            if let Some((w, h)) = size {
                cfg.corpus.width = w;
                cfg.corpus.height = h;
            }
            if let Some(seed) = seed {
                cfg.corpus.seed = seed;
            }
            if let Some(elements) = elements {
                cfg.corpus.elements = elements;
            }
            commands::gen_corpus(&cfg, force)
        }
        Command::Train { corpus, out, pool, log, seed } => {
            if corpus.is_some() {
                cfg.paths.corpus = corpus;
            }
            if out.is_some() {
                cfg.paths.checkpoint = out;
            }
            if pool.is_some() {
                cfg.paths.pool = pool;
            }
            if log.is_some() {
                cfg.paths.log = log;
            }
            if let Some(seed) = seed {
                cfg.train.seed = seed;
            }
            commands::cmd_train(&cfg)
        }
        Command::EvalMatching {
            ckpt,
            corpus,
            pairs,
            seed,
            thresholds,
            pixel_thresh,
            out,
            oracle,
        } => {
            if ckpt.is_some() {
                cfg.paths.checkpoint = ckpt;
            }
            if corpus.is_some() {
                cfg.paths.corpus = corpus;
            }
            if out.is_some() {
                cfg.paths.out = out;
            }
            if let Some(pairs) = pairs {
                cfg.matching.pairs = pairs;
            }
            if let Some(seed) = seed {
                cfg.matching.seed = seed;
            }
            if let Some(thresholds) = thresholds {
                cfg.matching.thresholds = thresholds;
            }
            if let Some(pixel_thresh) = pixel_thresh {
                cfg.matching.pixel_thresh = pixel_thresh;
            }
            if oracle {
                cfg.matching.oracle = true;
            }
            commands::eval_matching(&cfg)
        }
        Command::EvalRetrieval { ckpt, scenes, views, seed, out } => {
            if ckpt.is_some() {
                cfg.paths.checkpoint = ckpt;
            }
            if out.is_some() {
                cfg.paths.out = out;
            }
            if let Some(scenes) = scenes {
                cfg.retrieval.scenes = scenes;
            }
            if let Some(views) = views {
                cfg.retrieval.views = views;
            }
            if let Some(seed) = seed {
                cfg.retrieval.seed = seed;
            }
            commands::eval_retrieval(&cfg)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e).context("building thread pool")))?;
    pool.install(|| dispatch(cli.command, cfg))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(problems)) => {
            eprintln!("error: invalid invocation");
            for p in &problems {
                eprintln!("  - {p}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
