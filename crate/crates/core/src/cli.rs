//! Command implementations behind the `senti-prompt` binary.
//!
//! Each command is a plain function so the test suites can drive it without
//! spawning a process. Run artifacts land in
//! `<out>/<dataset>/<strategy>/{transcripts.jsonl, predictions.jsonl,
//! report.json, report.txt, confusion.csv}`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    CachedBackend, ChatBackend, Counting, GenerationParams, HttpBackend, HttpConfig, ResponseCache,
    RetryPolicy, ScriptedBackend, API_KEY_ENV,
};
use crate::eval::{render_table, EvalReport, Golds, RunMetadata};
use crate::ingest::{self, DatasetSpec, Manifest};
use crate::strategy::{
    build_plan_with, execute, StrategyKind, TemplateSet, Transcript, DEFAULT_MAX_TEXT_CHARS,
};
use crate::types::{Polarity, Prediction, Sample};

pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

/// Failure of a command, carrying its process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendChoice {
    Scripted { rules: PathBuf },
    Http { endpoint: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpSettings {
    pub timeout: Duration,
    pub max_attempts: u32,
    pub max_in_flight: usize,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            timeout: Duration::from_secs(60),
            max_attempts: RetryPolicy::default().max_attempts,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub dataset: String,
    pub strategy: StrategyKind,
    pub backend: BackendChoice,
    pub params: GenerationParams,
    pub limit: Option<usize>,
    pub seed: u64,
    /// `None` disables the response cache.
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub templates: Option<PathBuf>,
    pub workers: usize,
    pub max_text_chars: usize,
    pub http: HttpSettings,
}

impl RunConfig {
    pub fn new(
        manifest: impl Into<PathBuf>,
        dataset: impl Into<String>,
        strategy: StrategyKind,
        backend: BackendChoice,
    ) -> Self {
        RunConfig {
            manifest: manifest.into(),
            dataset: dataset.into(),
            strategy,
            backend,
            params: GenerationParams::default(),
            limit: None,
            seed: DEFAULT_SEED,
            cache_dir: None,
            out_dir: PathBuf::from("runs"),
            templates: None,
            workers: 4,
            max_text_chars: DEFAULT_MAX_TEXT_CHARS,
            http: HttpSettings::default(),
        }
    }

    pub fn artifact_dir(&self) -> PathBuf {
        self.out_dir
            .join(&self.dataset)
            .join(self.strategy.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: EvalReport,
    pub artifact_dir: PathBuf,
    /// Calls that reached the underlying backend (cache misses).
    pub backend_calls: usize,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(flatten)]
    pub prediction: Prediction,
    pub gold: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMetadata {
    pub model: String,
    pub timestamp: DateTime<Utc>,
}

/// One line of `transcripts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    #[serde(flatten)]
    pub transcript: Transcript,
    pub run_metadata: TranscriptMetadata,
}

fn load_dataset(cfg: &RunConfig) -> Result<(DatasetSpec, Vec<Sample>), CliError> {
    let manifest = Manifest::load(&cfg.manifest).map_err(|e| CliError::Config(e.to_string()))?;
    let spec = manifest
        .get(&cfg.dataset)
        .map_err(|e| CliError::Config(e.to_string()))?
        .clone();
    let samples = ingest::load(&spec).map_err(|e| CliError::Data(e.to_string()))?;
    let samples = match cfg.limit {
        Some(n) if n < samples.len() => ingest::sample_subset(&samples, n, cfg.seed)
            .map_err(|e| CliError::Data(e.to_string()))?,
        Some(n) => {
            if n > samples.len() {
                log::warn!(
                    "--limit {n} exceeds the {} available samples; using all of them",
                    samples.len()
                );
            }
            samples
        }
        None => samples,
    };
    Ok((spec, samples))
}

/// Runs a strategy over a dataset with the backend described by `cfg`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let inner: Box<dyn ChatBackend> = match &cfg.backend {
        BackendChoice::Scripted { rules } => {
            Box::new(ScriptedBackend::load(rules).map_err(|e| CliError::Config(e.to_string()))?)
        }
        BackendChoice::Http { endpoint } => {
            let key = std::env::var(API_KEY_ENV)
                .ok()
                .filter(|k| !k.trim().is_empty())
                .ok_or_else(|| {
                    CliError::Config(format!(
                    "the http backend needs an API key in the {API_KEY_ENV} environment variable"
                ))
                })?;
            let mut http = HttpConfig::new(endpoint.clone(), key);
            http.timeout = cfg.http.timeout;
            http.retry.max_attempts = cfg.http.max_attempts;
            http.max_in_flight = cfg.http.max_in_flight;
            Box::new(HttpBackend::new(http).map_err(|e| CliError::Config(e.to_string()))?)
        }
    };
    let upstream = Counting::new(inner);
    let report = match &cfg.cache_dir {
        Some(dir) => {
            let cache = ResponseCache::open(dir).map_err(|e| CliError::Config(e.to_string()))?;
            run_with_backend(cfg, &CachedBackend::new(&upstream, cache))?
        }
        None => run_with_backend(cfg, &upstream)?,
    };
    Ok(RunSummary {
        report,
        artifact_dir: cfg.artifact_dir(),
        backend_calls: upstream.calls(),
    })
}

/// The run pipeline over an already constructed backend: load, execute,
/// score and write artifacts. Returns the report.
pub fn run_with_backend<B: ChatBackend + ?Sized>(
    cfg: &RunConfig,
    backend: &B,
) -> Result<EvalReport, CliError> {
    let (spec, samples) = load_dataset(cfg)?;
    let templates = match &cfg.templates {
        Some(path) => TemplateSet::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => TemplateSet::default(),
    };
    let plan = build_plan_with(
        cfg.strategy,
        spec.domain.clone(),
        spec.label_space,
        &templates,
    )
    .map_err(|e| CliError::Config(e.to_string()))?
    .with_max_text_chars(cfg.max_text_chars);

    log::info!(
        "{}: {} sample(s), strategy {}, model {}",
        spec.name,
        samples.len(),
        cfg.strategy,
        cfg.params.model
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let done = AtomicUsize::new(0);
    let step = (samples.len() / 10).max(1);
    let results: Vec<_> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let r = execute(&plan, s, backend, &cfg.params);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if n % step == 0 || n == samples.len() {
                    log::info!("{n}/{} samples", samples.len());
                }
                r
            })
            .collect()
    });

    let mut transcripts = Vec::with_capacity(results.len());
    let mut predictions = Vec::with_capacity(results.len());
    for r in results {
        let (p, t) = r.map_err(|e| {
            CliError::Backend(format!(
                "{e}\nlast prompt: {:?}",
                e.partial
                    .turns()
                    .last()
                    .map(|t| t.content.as_str())
                    .unwrap_or("")
            ))
        })?;
        predictions.push(p);
        transcripts.push(t);
    }
    let truncated = transcripts.iter().filter(|t| t.truncated).count();
    if truncated > 0 {
        log::warn!(
            "{truncated} review(s) truncated to {} characters",
            cfg.max_text_chars
        );
    }

    let golds: Golds = samples
        .iter()
        .map(|s| (s.id().to_string(), s.gold()))
        .collect();
    let timestamp = Utc::now();
    let metadata = RunMetadata {
        model: cfg.params.model.clone(),
        temperature: cfg.params.temperature,
        timestamp,
        seed: cfg.seed,
        limit: cfg.limit,
    };
    let report = EvalReport::build(
        &spec.name,
        cfg.strategy,
        &predictions,
        &golds,
        spec.label_space,
        metadata,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    let dir = cfg.artifact_dir();
    let out = |e: std::io::Error| CliError::Config(format!("{}: {e}", dir.display()));
    fs::create_dir_all(&dir).map_err(out)?;
    write_jsonl(
        &dir.join("transcripts.jsonl"),
        transcripts.into_iter().map(|transcript| TranscriptRecord {
            transcript,
            run_metadata: TranscriptMetadata {
                model: cfg.params.model.clone(),
                timestamp,
            },
        }),
    )
    .map_err(out)?;
    write_jsonl(
        &dir.join("predictions.jsonl"),
        predictions.into_iter().map(|prediction| PredictionRecord {
            gold: golds[&prediction.sample_id],
            prediction,
        }),
    )
    .map_err(out)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(dir.join("report.json"), json + "\n").map_err(out)?;
    fs::write(dir.join("report.txt"), report.to_text()).map_err(out)?;
    fs::write(dir.join("confusion.csv"), report.confusion.to_csv()).map_err(out)?;
    Ok(report)
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn collect_reports(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for e in entries {
            if e.is_dir() || e.file_name().is_some_and(|n| n == "report.json") {
                collect_reports(&e, out)?;
            }
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Loads report files (directories are searched for `report.json`).
pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<EvalReport>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        collect_reports(p, &mut files)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    }
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f)
                .map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: not a report: {e}", f.display())))
        })
        .collect()
}

/// Merges report files into one strategies × datasets accuracy table.
pub fn cmd_report(paths: &[PathBuf]) -> Result<String, CliError> {
    let reports = load_reports(paths)?;
    render_table(&reports).map_err(|e| CliError::Data(e.to_string()))
}

/// Checks every dataset in the manifest (or just `only`). Returns the
/// printable summary and whether no row was rejected.
pub fn cmd_validate_dataset(
    manifest: &Path,
    only: Option<&str>,
) -> Result<(String, bool), CliError> {
    let manifest = Manifest::load(manifest).map_err(|e| CliError::Config(e.to_string()))?;
    let specs: Vec<&DatasetSpec> = match only {
        Some(name) => vec![manifest
            .get(name)
            .map_err(|e| CliError::Config(e.to_string()))?],
        None => manifest.datasets.iter().collect(),
    };
    let mut out = String::new();
    let mut clean = true;
    for spec in specs {
        let report = ingest::scan(spec).map_err(|e| CliError::Data(e.to_string()))?;
        let _ = writeln!(
            out,
            "{} ({}, {}, {})",
            spec.name,
            spec.path.display(),
            spec.domain,
            spec.label_space
        );
        let counts = report.label_counts();
        for p in spec.label_space.members() {
            let _ = writeln!(
                out,
                "  {:<9} {}",
                p.as_str(),
                counts.get(p).copied().unwrap_or(0)
            );
        }
        if report.excluded > 0 {
            let _ = writeln!(out, "  excluded  {}", report.excluded);
        }
        if report.invalid_utf8_rows > 0 {
            let _ = writeln!(
                out,
                "  rows with invalid UTF-8 (replaced): {}",
                report.invalid_utf8_rows
            );
        }
        let _ = writeln!(out, "  rejected  {}", report.rejected.len());
        for r in &report.rejected {
            let _ = writeln!(out, "    {r}");
        }
        clean &= report.rejected.is_empty();
    }
    Ok((out, clean))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheAction {
    Stats,
    Clear,
}

pub fn cmd_cache(dir: &Path, action: CacheAction) -> Result<String, CliError> {
    let cache = ResponseCache::open(dir).map_err(|e| CliError::Config(e.to_string()))?;
    match action {
        CacheAction::Stats => {
            let s = cache.stats().map_err(|e| CliError::Config(e.to_string()))?;
            Ok(format!(
                "{} entries, {} bytes in {}\n",
                s.entries,
                s.bytes,
                dir.display()
            ))
        }
        CacheAction::Clear => {
            let n = cache.clear().map_err(|e| CliError::Config(e.to_string()))?;
            Ok(format!("removed {n} entries from {}\n", dir.display()))
        }
    }
}
