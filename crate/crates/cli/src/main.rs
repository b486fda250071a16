mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use siting::ErrorKind;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "siting", version, about = "Similarity-based station siting on a regular grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// INI run configuration; relative paths inside resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed, overriding `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `[paths] output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city with planted zones.
    Synth(Common),
    /// Train the autoencoder and write embeddings.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint (not supported).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Select a dispersed set of high-similarity cells.
    Allocate(Common),
    /// Allocate for every k in `[sweep] k_values` and compare selections.
    Sweep(Common),
    /// Condense several allocations into consensus zones.
    Consensus(Common),
    /// Cluster quality and embedding diagnostics.
    Evaluate(Common),
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::InputData => 3,
        ErrorKind::Numeric => 4,
    }
}

fn run(cli: Cli) -> siting::Result<()> {
    let load = |c: &Common| RunConfig::load(c.config.as_deref(), c.seed, c.out.as_deref());
    match cli.command {
        Command::Synth(c) => commands::synth(&load(&c)?),
        Command::Train { common, resume } => {
            let cfg = load(&common)?;
            if let Some(p) = resume {
                return Err(siting::Error::Config(format!(
                    "resuming from {} is not supported; rerun train from scratch",
                    p.display()
                )));
            }
            commands::train(&cfg)
        }
        Command::Allocate(c) => commands::allocate(&load(&c)?),
        Command::Sweep(c) => commands::sweep(&load(&c)?),
        Command::Consensus(c) => commands::consensus(&load(&c)?),
        Command::Evaluate(c) => commands::evaluate(&load(&c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
