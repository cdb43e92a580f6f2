//! `kite`: spectra, ladders, reduction, dynamics and fits from JSON configs.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::RunContext;
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "kite",
    version,
    about = "Spectral toolkit for an oscillator shunted by a two-Cooper-pair tunneling element"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for the iterative eigensolver's start block.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Transitions and shifts along a flux path.
    Spectrum,
    /// RWA interaction energies, or their inversion from measured shifts.
    Ladder,
    /// Reduce circuit parameters to the effective one-mode model.
    Reduce,
    /// Coherent-state evolution with Wigner snapshots.
    Evolve,
    /// Fit model parameters to a spectroscopy dataset.
    Fit {
        /// Comma-separated parameter names to hold fixed.
        #[arg(long, value_delimiter = ',')]
        mask: Vec<String>,
    },
    /// Find basis sizes at which transitions stop moving.
    Converge,
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let ctx = RunContext { seed: cli.seed, threads: rayon::current_num_threads() };
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Spectrum => commands::spectrum(&config::load(path)?, &ctx, out),
        Command::Ladder => commands::ladder_cmd(&config::load(path)?, &ctx, out),
        Command::Reduce => commands::reduce(&config::load(path)?, &ctx, out),
        Command::Evolve => commands::evolve(&config::load(path)?, &ctx, out),
        Command::Fit { mask } => commands::fit(&config::load(path)?, path, mask, &ctx, out),
        Command::Converge => commands::converge(&config::load(path)?, &ctx, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kite: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
