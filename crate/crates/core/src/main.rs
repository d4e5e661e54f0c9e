use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use senti_prompt::backend::GenerationParams;
use senti_prompt::cli::{
    self, BackendChoice, CacheAction, CliError, HttpSettings, RunConfig, DEFAULT_ENDPOINT,
    DEFAULT_SEED,
};
use senti_prompt::eval::{render_report, ReportFormat};
use senti_prompt::strategy::{StrategyKind, DEFAULT_MAX_TEXT_CHARS};

#[derive(Parser)]
#[command(
    name = "senti-prompt",
    version,
    about = "Prompting-strategy sentiment evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Vanilla,
    Rp,
    Cot,
    #[value(name = "rp_cot", alias = "rp-cot")]
    RpCot,
}

impl From<Strategy> for StrategyKind {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Vanilla => StrategyKind::Vanilla,
            Strategy::Rp => StrategyKind::Rp,
            Strategy::Cot => StrategyKind::Cot,
            Strategy::RpCot => StrategyKind::RpCot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Scripted,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CacheCmd {
    Stats,
    Clear,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy over one dataset and write transcripts, predictions and a report
    Run {
        #[arg(long, env = "SENTI_PROMPT_MANIFEST", default_value = "datasets.json")]
        manifest: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: Backend,
        /// Scripted-rule file (JSON lines), required for the scripted backend
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, env = "SENTI_PROMPT_ENDPOINT", default_value = DEFAULT_ENDPOINT)]
        endpoint: String,
        #[arg(long, env = "SENTI_PROMPT_MODEL", default_value = senti_prompt::backend::DEFAULT_MODEL)]
        model: String,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(long)]
        max_output_tokens: Option<u32>,
        /// Evaluate a seeded random subset of this many samples
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(
            long,
            env = "SENTI_PROMPT_CACHE_DIR",
            default_value = ".senti-prompt-cache"
        )]
        cache_dir: PathBuf,
        #[arg(long)]
        no_cache: bool,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Template override file (`<strategy>.<step> = template` lines)
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_TEXT_CHARS)]
        max_text_chars: usize,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
        #[arg(long, default_value_t = 3)]
        max_attempts: u32,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
    },
    /// Merge report.json files (or directories containing them) into one accuracy table
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Check dataset files against the manifest and print label counts
    ValidateDataset {
        #[arg(long, env = "SENTI_PROMPT_MANIFEST", default_value = "datasets.json")]
        manifest: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Inspect or empty the response cache
    Cache {
        #[arg(value_enum)]
        action: CacheCmd,
        #[arg(
            long,
            env = "SENTI_PROMPT_CACHE_DIR",
            default_value = ".senti-prompt-cache"
        )]
        cache_dir: PathBuf,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            manifest,
            dataset,
            strategy,
            backend,
            rules,
            endpoint,
            model,
            temperature,
            max_output_tokens,
            limit,
            seed,
            cache_dir,
            no_cache,
            out,
            templates,
            workers,
            max_text_chars,
            timeout_secs,
            max_attempts,
            max_in_flight,
        } => {
            let backend = match backend {
                Backend::Scripted => BackendChoice::Scripted {
                    rules: rules.ok_or_else(|| {
                        CliError::Config("the scripted backend needs --rules <FILE>".into())
                    })?,
                },
                Backend::Http => BackendChoice::Http { endpoint },
            };
            let mut cfg = RunConfig::new(manifest, dataset, strategy.into(), backend);
            cfg.params = GenerationParams {
                model,
                temperature,
                max_output_tokens,
            };
            cfg.limit = limit;
            cfg.seed = seed;
            cfg.cache_dir = (!no_cache).then_some(cache_dir);
            cfg.out_dir = out;
            cfg.templates = templates;
            cfg.workers = workers;
            cfg.max_text_chars = max_text_chars;
            cfg.http = HttpSettings {
                timeout: Duration::from_secs(timeout_secs),
                max_attempts,
                max_in_flight,
            };
            let summary = cli::cmd_run(&cfg)?;
            eprintln!(
                "wrote {} ({} backend call(s), {} unparseable)",
                summary.artifact_dir.display(),
                summary.backend_calls,
                summary.report.n_unparseable
            );
            print!("{}", summary.report.to_text());
        }
        Command::Report { inputs, format } => match format {
            Format::Table => print!("{}", cli::cmd_report(&inputs)?),
            Format::Json => {
                let reports = cli::load_reports(&inputs)?;
                print!(
                    "{}",
                    render_report(&reports, ReportFormat::Json)
                        .map_err(|e| CliError::Data(e.to_string()))?
                );
            }
        },
        Command::ValidateDataset { manifest, dataset } => {
            let (summary, clean) = cli::cmd_validate_dataset(&manifest, dataset.as_deref())?;
            print!("{summary}");
            if !clean {
                return Err(CliError::Data("dataset has rejected rows".into()));
            }
        }
        Command::Cache { action, cache_dir } => {
            let action = match action {
                CacheCmd::Stats => CacheAction::Stats,
                CacheCmd::Clear => CacheAction::Clear,
            };
            print!("{}", cli::cmd_cache(&cache_dir, action)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // usage errors exit 1, not clap's default 2 (reserved for data errors)
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
