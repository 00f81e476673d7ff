//! Command-line experiments for fragmented imaginary-time evolution.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::Overrides;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Core(#[from] fragqite::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Assertion(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fragqite", version, about = "Query-complexity experiments for imaginary-time evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probabilistic, coherent, uniform and optimized fragmented costs over a β grid.
    ComplexityScan(Overrides),
    /// Critical inverse temperature per instance and its scaling with N.
    BetaCrit(Overrides),
    /// Optimal schedule parameters versus β with power-law fits.
    ScheduleScan(Overrides),
    /// Builds one primitive and checks its block error and output state.
    ValidatePrimitive(commands::ValidateArgs),
    /// Query lower bound and the gap of P1 to it.
    LowerBound(Overrides),
    /// Decides bit-string parities with an imaginary-time block.
    ParityDemo(Overrides),
    /// First-fragment ratios of optimized schedules.
    Histogram(Overrides),
}

fn run(cli: Cli) -> Result<(), CliError> {
    use config::ExperimentConfig as Cfg;
    match cli.command {
        Command::ComplexityScan(o) => commands::complexity_scan(&Cfg::resolve(&o)?),
        Command::BetaCrit(o) => commands::beta_crit(&Cfg::resolve(&o)?),
        Command::ScheduleScan(o) => commands::schedule_scan(&Cfg::resolve(&o)?),
        Command::ValidatePrimitive(a) => commands::validate_primitive(&a),
        Command::LowerBound(o) => commands::lower_bound(&Cfg::resolve(&o)?),
        Command::ParityDemo(o) => commands::parity_demo(&Cfg::resolve(&o)?),
        Command::Histogram(o) => commands::histogram(&Cfg::resolve(&o)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
