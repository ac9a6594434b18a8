//! `graphnet` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 verification failure, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] graphnet::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) if e.is_data_error() => 3,
            CliError::Verification(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "graphnet", version, about = "Sparse graph-structured penalized regression and classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Skip one header line in CSV inputs.
    #[arg(long)]
    header: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model (or a regularization path) and write its coefficients.
    Fit(Common),
    /// Grouped cross-validation over a parameter grid.
    Cv {
        #[command(flatten)]
        common: Common,
        /// Grid preset: `standard` (the full search grid) or `custom`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Apply a saved model to new data.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Write a synthetic lattice dataset.
    Simulate(Common),
    /// Compare the solver against the reference oracles.
    Verify(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, keys, extra): (Common, &[&str], Vec<(&str, String)>) = match &cli.command {
        Command::Fit(c) => (c.clone(), commands::FIT_KEYS, vec![]),
        Command::Cv { common, grid } => {
            (common.clone(), commands::CV_KEYS, grid.iter().map(|g| ("grid", g.clone())).collect())
        }
        Command::Predict { common, model, data, labels } => {
            let mut extra = Vec::new();
            for (k, v) in [("model", model), ("x", data), ("y", labels)] {
                if let Some(p) = v {
                    extra.push((k, p.display().to_string()));
                }
            }
            (common.clone(), commands::PREDICT_KEYS, extra)
        }
        Command::Simulate(c) => (c.clone(), commands::SIMULATE_KEYS, vec![]),
        Command::Verify(c) => (c.clone(), commands::VERIFY_KEYS, vec![]),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(format!("cannot configure thread pool: {e}")))?;
    }
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.set, keys)?;
    if common.header && keys.contains(&"header") {
        cfg.set("header", "true");
    }
    for (k, v) in extra {
        cfg.set(k, v);
    }
    match cli.command {
        Command::Fit(_) => commands::fit(&cfg),
        Command::Cv { .. } => commands::cv(&cfg),
        Command::Predict { .. } => commands::predict(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Verify(_) => commands::verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("graphnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
