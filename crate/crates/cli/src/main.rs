//! `mrbm <command> --config path.json [--out dir]`
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 acceptance-target miss.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mrbm", version, about = "Constrained Brownian motion samplers and diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Paths {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compare 1-D chains on [0, 1] with the reflected heat kernel.
    Density1d(Paths),
    /// Convergence-time scaling with dimension on hypercubes.
    Scaling(Paths),
    /// Train a score network.
    Train(Paths),
    /// Generate samples from a trained run.
    Sample(Paths),
    /// MMD between two point files with a bootstrap interval.
    Mmd(Paths),
    /// Point-in-spherical-polygon membership for a points file.
    Polycheck(Paths),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Miss(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Miss(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Miss(m) => write!(f, "target missed: {m}"),
        }
    }
}

impl From<mrbm::Error> for CliError {
    fn from(e: mrbm::Error) -> Self {
        use mrbm::Error as E;
        let mut root = &e;
        while let E::AtStep { source, .. } = root {
            root = source;
        }
        match root {
            E::DimensionMismatch { .. }
            | E::ContractViolation(_)
            | E::Unsupported(_)
            | E::Config(_)
            | E::Input { .. }
            | E::Parse { .. }
            | E::Io(_)
            | E::Json(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MRBM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("MRBM_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (paths, f): (&Paths, fn(&std::path::Path, &std::path::Path) -> Result<(), CliError>) = match &cli.command {
        Command::Density1d(p) => (p, commands::density1d),
        Command::Scaling(p) => (p, commands::scaling),
        Command::Train(p) => (p, commands::train),
        Command::Sample(p) => (p, commands::sample),
        Command::Mmd(p) => (p, commands::mmd_cmd),
        Command::Polycheck(p) => (p, commands::polycheck),
    };
    std::fs::create_dir_all(&paths.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", paths.out.display())))?;
    f(&paths.config, &paths.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mrbm: {e}");
            ExitCode::from(e.code())
        }
    }
}
