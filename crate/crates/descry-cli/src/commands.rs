//! The four pipeline commands. Each validates exhaustively before touching
//! the filesystem, runs the library pipeline, and writes deterministic
//! artifacts: equal flags give byte-equal files regardless of thread count.

use std::fs;
use std::path::{Path, PathBuf};

use descry::descriptor::{load_checkpoint, save_checkpoint, ModelParams};
use descry::evaluation::{
    build_eval_pairs, compute_matching_metrics, emit_report, evaluate_retrieval, DescriptorSource,
    EvalError, EvalPairConfig, RenderText, ReportFormat, RetrievalConfig,
};
use descry::imaging::{load_corpus_gray, write_corpus, CorpusSpec, ImageGray, ImagingError};
use descry::training::{train, TrainError};

use crate::config::{RunConfig, WithConfig};

pub enum CliError {
    /// Bad flags or config, every problem listed. Exit code 2.
    Validation(Vec<String>),
    /// The pipeline itself failed. Exit code 3.
    Runtime(anyhow::Error),
}

impl CliError {
    fn one(problem: impl Into<String>) -> Self {
        Self::Validation(vec![problem.into()])
    }
}

fn runtime(e: impl std::error::Error + Send + Sync + 'static, what: &str) -> CliError {
    CliError::Runtime(anyhow::Error::new(e).context(what.to_string()))
}

/// `prefix` + literal suffix, leaving any dots in the prefix alone.
fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn require_path(
    slot: &Option<PathBuf>,
    flag: &str,
    field: &str,
    problems: &mut Vec<String>,
) -> PathBuf {
    match slot {
        Some(p) => p.clone(),
        None => {
            problems.push(format!("{field} is required (pass {flag} or set {field})"));
            PathBuf::new()
        }
    }
}

fn load_corpus(dir: &Path) -> Result<Vec<(u32, ImageGray)>, CliError> {
    load_corpus_gray(dir)
        .map_err(|e| runtime(e, &format!("loading corpus from {}", dir.display())))
}

fn load_model(path: &Path) -> Result<ModelParams, CliError> {
    load_checkpoint(path)
        .map_err(|e| runtime(e, &format!("loading checkpoint {}", path.display())))
}

fn write_reports<R: serde::Serialize + RenderText>(
    report: &R,
    cfg: &RunConfig,
    prefix: &Path,
) -> Result<(), CliError> {
    let echoed = WithConfig { report, config: cfg };
    for (suffix, format) in [(".json", ReportFormat::Json), (".txt", ReportFormat::Text)] {
        let path = with_suffix(prefix, suffix);
        emit_report(&echoed, &path, format)
            .map_err(|e| runtime(e, &format!("writing report {}", path.display())))?;
    }
    print!("{}", echoed.render_text());
    Ok(())
}

pub fn gen_corpus(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let mut problems = cfg.corpus.problems();
    let out = require_path(&cfg.paths.corpus, "--out", "paths.corpus", &mut problems);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }

    let spec = CorpusSpec {
        width: cfg.corpus.width,
        height: cfg.corpus.height,
        element_count: cfg.corpus.elements,
    };
    let manifest = write_corpus(&out, cfg.corpus.count, &spec, cfg.corpus.seed, force)
        .map_err(|e| match e {
            ImagingError::CorpusDirNotEmpty(dir) => {
                CliError::one(format!("output directory {dir} is not empty (pass --force to overwrite)"))
            }
            other => runtime(other, "generating corpus"),
        })?;
    println!("wrote {} images to {}", manifest.images.len(), out.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let mut problems: Vec<String> =
        cfg.train.problems().into_iter().map(|p| format!("train.{p}")).collect();
    let corpus_dir = require_path(&cfg.paths.corpus, "--corpus", "paths.corpus", &mut problems);
    let ckpt_out = require_path(&cfg.paths.checkpoint, "--out", "paths.checkpoint", &mut problems);
    let needs_pool = cfg.train.strategy.needs_pool();
    if needs_pool && cfg.paths.pool.is_none() {
        problems.push(
            "paths.pool is required when the strategy is coarse_to_fine_top_k \
             (pass --pool or set paths.pool)"
                .into(),
        );
    }
    if !needs_pool && cfg.paths.pool.is_some() {
        problems.push("paths.pool is set but the configured strategy does not use a pool".into());
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let log_out = cfg
        .paths
        .log
        .clone()
        .unwrap_or_else(|| with_suffix(&ckpt_out, ".log.jsonl"));

    let corpus = load_corpus(&corpus_dir)?;
    let pool_images = match &cfg.paths.pool {
        Some(dir) => Some(load_corpus(dir)?),
        None => None,
    };

    let (params, report) = train(&corpus, pool_images.as_deref(), &cfg.train).map_err(|e| {
        match e {
            TrainError::BadConfig(list) => {
                CliError::Validation(list.into_iter().map(|p| format!("train.{p}")).collect())
            }
            other => runtime(other, "training aborted"),
        }
    })?;

    save_checkpoint(&params, &ckpt_out)
        .map_err(|e| runtime(e, &format!("writing checkpoint {}", ckpt_out.display())))?;

    // Log line 1 is the effective run config; every later line is one
    // epoch record. No timestamps anywhere: reruns must be byte-equal.
    let mut log = serde_json::to_string(cfg).expect("config serializes");
    log.push('\n');
    for rec in &report.epochs {
        log.push_str(&serde_json::to_string(rec).expect("epoch record serializes"));
        log.push('\n');
    }
    fs::write(&log_out, &log)
        .map_err(|e| runtime(e, &format!("writing log {}", log_out.display())))?;

    for rec in &report.epochs {
        println!("{}", serde_json::to_string(rec).expect("epoch record serializes"));
    }
    println!("checkpoint {}", ckpt_out.display());
    println!("log {}", log_out.display());
    eprintln!("trained {} epochs in {:.1}s", report.epochs.len(), report.seconds);
    Ok(())
}

fn map_eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::BadConfig(list) => CliError::Validation(list),
        EvalError::BadThresholds(msg) => CliError::one(msg),
        other => runtime(other, "evaluation aborted"),
    }
}

pub fn eval_matching(cfg: &RunConfig) -> Result<(), CliError> {
    let mut problems = cfg.matching.problems();
    let ckpt = require_path(&cfg.paths.checkpoint, "--ckpt", "paths.checkpoint", &mut problems);
    let corpus_dir = require_path(&cfg.paths.corpus, "--corpus", "paths.corpus", &mut problems);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let out_prefix = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("matching_report"));

    let params = load_model(&ckpt)?;
    let corpus = load_corpus(&corpus_dir)?;

    // Cross-artifact checks: crops must fit the corpus images and hold
    // whole patches with room for the detector's border margin.
    let mut problems = Vec::new();
    if let Some((_, img)) = corpus.first() {
        if img.width() < cfg.matching.crop_size || img.height() < cfg.matching.crop_size {
            problems.push(format!(
                "corpus images are {}x{} but matching.crop_size is {}",
                img.width(),
                img.height(),
                cfg.matching.crop_size
            ));
        }
    }
    if cfg.matching.crop_size < 2 * params.patch_side {
        problems.push(format!(
            "checkpoint patch_side {} needs crops of at least {}px, got matching.crop_size {}",
            params.patch_side,
            2 * params.patch_side,
            cfg.matching.crop_size
        ));
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }

    let source = if cfg.matching.oracle {
        DescriptorSource::Oracle
    } else {
        DescriptorSource::Model(&params)
    };
    let pair_cfg = EvalPairConfig {
        pairs: cfg.matching.pairs,
        crop_size: cfg.matching.crop_size,
        homography: cfg.matching.homography,
        seed: cfg.matching.seed,
        detect_max: cfg.matching.detect_max,
        nms_radius: cfg.matching.nms_radius,
    };
    let pairs = build_eval_pairs(&corpus, source, &pair_cfg).map_err(map_eval_error)?;
    let report = compute_matching_metrics(
        &pairs,
        cfg.matching.pixel_thresh,
        &cfg.matching.threshold_list(),
        &cfg.matching.ransac,
    )
    .map_err(map_eval_error)?;

    write_reports(&report, cfg, &out_prefix)
}

pub fn eval_retrieval(cfg: &RunConfig) -> Result<(), CliError> {
    let retrieval_cfg = RetrievalConfig {
        scenes: cfg.retrieval.scenes,
        views: cfg.retrieval.views,
        crop_size: cfg.retrieval.crop_size,
        keypoints_per_view: cfg.retrieval.keypoints_per_view,
        seed: cfg.retrieval.seed,
        homography: cfg.retrieval.homography,
        aggregation: cfg.retrieval.aggregation,
        ransac: cfg.retrieval.ransac,
        rerank_depth: cfg.retrieval.rerank_depth,
    };
    let mut problems: Vec<String> = retrieval_cfg
        .problems()
        .into_iter()
        .map(|p| format!("retrieval.{p}"))
        .collect();
    let ckpt = require_path(&cfg.paths.checkpoint, "--ckpt", "paths.checkpoint", &mut problems);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let out_prefix = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("retrieval_report"));

    let params = load_model(&ckpt)?;
    let summary = evaluate_retrieval(&params, &retrieval_cfg).map_err(map_eval_error)?;
    write_reports(&summary, cfg, &out_prefix)
}
