//! `session-intent`: generate or ingest session logs, train page vectors, fit
//! the intent mixture, infer session intents and write the analysis report.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use session_intent::corpus::InputFormat;
use session_intent::{ErrorKind, Result};

use config::{parse_k_range, KRange, PipelineConfig};

#[derive(Parser)]
#[command(name = "session-intent", version, about = "Session intent modeling pipeline")]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for training and parallel stages; overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Debug-level logging.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic session corpus and its ground truth.
    Generate,
    /// Read a session log, apply the rewrite table and write the canonical corpus.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// jsonl or csv.
        #[arg(long, default_value = "jsonl")]
        format: InputFormat,
    },
    /// Build the vocabulary and train page vectors.
    Train,
    /// Fit the intent mixture to the page vectors.
    Fit {
        /// Number of intents; overrides the config.
        #[arg(long, conflicts_with = "k_range")]
        k: Option<usize>,
        /// Select the number of intents by BIC over LO..HI (inclusive).
        #[arg(long, value_parser = parse_k_range)]
        k_range: Option<KRange>,
    },
    /// Infer the intent of every session.
    Infer,
    /// Write the analysis report bundle.
    Analyze,
}

fn run(cli: Cli) -> Result<()> {
    let Some(path) = cli.config else {
        Cli::command()
            .error(clap::error::ErrorKind::MissingRequiredArgument, "--config <CONFIG> is required")
            .exit();
    };
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if let Some(threads) = cli.threads {
        cfg.train.threads = threads;
    }
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.train.threads)
        .build_global()
        .map_err(|e| session_intent::Error::Config(format!("thread pool: {e}")))?;

    match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Ingest { input, format } => commands::ingest(&cfg, &input, format),
        Command::Train => commands::train(&cfg),
        Command::Fit { k, k_range } => {
            if k == Some(0) {
                return Err(session_intent::Error::Config("--k must be >= 1".into()));
            }
            commands::fit_model(&cfg, k, k_range.map(|r| r.0))
        }
        Command::Infer => commands::infer(&cfg),
        Command::Analyze => commands::analyze(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}
