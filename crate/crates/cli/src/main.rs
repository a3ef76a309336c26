//! `qsampler` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "qsampler", version, about = "Train and evaluate sampling networks for few-qubit states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; QSAMPLER_OUT takes precedence
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Train a network and write its history and checkpoints
    Train,
    /// Evaluate a checkpoint: witness curve, fidelity, KL divergence
    Eval,
    /// Time Gibbs sampling against the operation-count and hardware models
    Bench,
    /// KL divergence of LIF readouts against the readout interval
    Nyquist,
    /// Measure and fit the LIF activation curve
    Calibrate,
}

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

pub struct Context {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("{}", Failure::Config("--config <path> is required".into()));
        return ExitCode::from(2);
    };
    let out = std::env::var_os("QSAMPLER_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or(cli.out)
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context {
        config,
        out,
        seed: cli.seed,
    };
    let result = match cli.command {
        Command::Train => commands::train(&ctx),
        Command::Eval => commands::eval(&ctx),
        Command::Bench => commands::bench(&ctx),
        Command::Nyquist => commands::nyquist(&ctx),
        Command::Calibrate => commands::calibrate(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
