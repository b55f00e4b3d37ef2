//! Command-line front end: JSON configs, synthetic benchmarks and filtering
//! of user data.

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;

pub use error::{CliError, CliResult};

pub fn run(cli: cli::Cli) -> CliResult<()> {
    match &cli.command {
        cli::Command::Benchmark(a) => commands::benchmark(a).map(drop),
        cli::Command::Curve(a) => commands::curve(a).map(drop),
        cli::Command::Diagnose(a) => commands::diagnose(a).map(drop),
        cli::Command::Filter(a) => commands::filter(a).map(drop),
    }
}
