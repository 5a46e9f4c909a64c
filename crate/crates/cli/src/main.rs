//! `tradeflow`: ingest trade data, run the two-stage provision analysis and
//! the gravity baselines.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for bad input or
//! configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BaselineKind, SynthKind};
use config::{CliConfig, InputError};

#[derive(Parser)]
#[command(name = "tradeflow", version, about = "Which trade-agreement provisions drive trade")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join a flows CSV and a provisions CSV into a serialized panel.
    Ingest {
        /// CSV with header exporter,importer,year,flow
        #[arg(long)]
        flows: PathBuf,
        /// CSV with header exporter,importer,year,<provision ids...>
        #[arg(long)]
        provisions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset plus a `.truth.json` sidecar with the planted model.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the trade/no-trade classifier and rank provisions by SHAP importance.
    Stage1 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the factorization machine on nonzero flows using the stage-1 provisions.
    Stage2 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Collect both stages into report.json.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a gravity baseline: log-linear OLS, PPML or Lasso-PPML.
    Baseline {
        #[arg(value_enum)]
        estimator: BaselineKind,
        #[arg(long)]
        config: PathBuf,
    },
    /// Dump the stage-1 SHAP attribution of one panel row.
    Explain {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest {
            flows,
            provisions,
            out,
        } => commands::ingest(&flows, &provisions, &out),
        Command::Synth { kind, config, out } => {
            commands::synth(kind, &CliConfig::load(&config)?, &out)
        }
        Command::Stage1 { config } => commands::stage1(&CliConfig::load(&config)?),
        Command::Stage2 { config } => commands::stage2(&CliConfig::load(&config)?),
        Command::Report { config } => commands::report(&CliConfig::load(&config)?),
        Command::Baseline { estimator, config } => {
            commands::baseline(estimator, &CliConfig::load(&config)?)
        }
        Command::Explain { config } => commands::explain(&CliConfig::load(&config)?),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tradeflow::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
        if cause.is::<InputError>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
