//! Streaming record linkage CLI.
//!
//! The workflow is file-at-a-time: `simulate` produces a corpus, `fit` runs
//! the two-file starting fit, `update` assimilates each further file with a
//! streaming sampler, `evaluate` and `diagnose` inspect any stored stage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use linkstream_cli::commands;
use linkstream_cli::config::{Method, RunConfig};
use linkstream_cli::error::CliError;

#[derive(Parser)]
#[command(name = "linkstream", version, about = "Streaming Bayesian record linkage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "LINKSTREAM_OUT")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the comparison container for one new file against previous files.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Previous files in arrival order.
        #[arg(long = "previous", required = true, num_args = 1..)]
        previous: Vec<PathBuf>,
        #[arg(long = "new-file")]
        new_file: PathBuf,
        #[arg(long, env = "LINKSTREAM_OUT")]
        out: PathBuf,
        /// Also export the pair levels as CSV for debugging.
        #[arg(long)]
        csv: bool,
    },
    /// Two-file starting fit (stage 2).
    Fit {
        file1: PathBuf,
        file2: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "LINKSTREAM_OUT")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Streaming update: assimilate one new file into a prior stage.
    Update {
        new_file: PathBuf,
        /// Prior stage directory (must pass the lineage check).
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "LINKSTREAM_OUT")]
        out: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a stored stage against ground truth.
    Evaluate {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, env = "LINKSTREAM_OUT")]
        out: PathBuf,
    },
    /// Effective-sample-size and degeneracy report for a stored stage.
    Diagnose {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, env = "LINKSTREAM_OUT")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let config = RunConfig::load(config.as_deref())?;
            commands::cmd_simulate(&config, &out, seed)?;
        }
        Command::Compare {
            config,
            previous,
            new_file,
            out,
            csv,
        } => {
            let config = RunConfig::load(config.as_deref())?;
            commands::cmd_compare(&config, &previous, &new_file, &out, csv)?;
        }
        Command::Fit {
            file1,
            file2,
            config,
            out,
            seed,
        } => {
            let config = RunConfig::load(config.as_deref())?;
            commands::cmd_fit(&config, &file1, &file2, &out, seed)?;
        }
        Command::Update {
            new_file,
            prior,
            config,
            out,
            method,
            workers,
            seed,
        } => {
            let config = RunConfig::load(config.as_deref())?;
            commands::cmd_update(&config, &new_file, &prior, &out, method, workers, seed)?;
        }
        Command::Evaluate { store, truth, out } => {
            commands::cmd_evaluate(&store, &truth, &out)?;
        }
        Command::Diagnose { store, out } => {
            commands::cmd_diagnose(&store, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
