//! `longevity`: reproduce the benefit map, the benefit table and the fan
//! charts, or run single solves and simulations from a TOML config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] longevity::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("target missed: {0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Check(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "longevity", version, about = "Longevity insurance between pension funds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file, or the name of a built-in preset
    /// (figure1, table2, fig2, fig3, stylized).
    #[arg(long, global = true)]
    config: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Table cells as `alpha1:alpha2` pairs separated by commas.
    #[arg(long, global = true, allow_hyphen_values = true)]
    cells: Option<String>,
    /// Override the number of simulated paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Exit with status 3 when a reproduction target is missed.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Benefit map and well-posedness of the stylised model.
    Figure1,
    /// Benefit table under the CBD model.
    Table2,
    /// Consumption, insurance and profit-and-loss fans.
    Fans,
    /// Solve both funds' equations and cache the result.
    Solve,
    /// Simulate the finite fund from a cached solve.
    Simulate {
        /// Solve first if no cached solution exists.
        #[arg(long)]
        fresh: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Figure1 => "figure1",
            Command::Table2 => "table2",
            Command::Fans => "fans",
            Command::Solve => "solve",
            Command::Simulate { .. } => "simulate",
        }
    }

    fn default_config(&self) -> &'static str {
        match self {
            Command::Figure1 => "figure1",
            Command::Table2 => "table2",
            _ => "fig2",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = ExperimentConfig::load(cli.config.as_deref().unwrap_or(cli.command.default_config()))?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(n) = cli.paths {
        cfg.sim.n_paths = n;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out)?;
    let ctx = commands::Context::new(cli.command.name(), cfg, cli.out.clone(), cli.check);
    match cli.command {
        Command::Figure1 => commands::figure1(&ctx),
        Command::Table2 => commands::table2(&ctx, cli.cells.as_deref()),
        Command::Fans => commands::fans(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Simulate { fresh } => commands::simulate(&ctx, fresh),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
