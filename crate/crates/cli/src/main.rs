//! Command-line driver: simulate benchmark data, fit sparse models, run
//! active learning, sweep thresholds and merge finished runs into tables.

mod commands;
mod config;
mod manifest;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sysid::Error;

#[derive(Parser, Debug)]
#[command(name = "sysid", version, about = "Sparse Bayesian identification of ODE/PDE right-hand sides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment configuration (TOML), or a run manifest to replay.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the configured one.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; overrides the configured one.
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a benchmark system and write clean and noisy data.
    Simulate(Common),
    /// Identify a sparse model with uncertainty.
    Fit(Common),
    /// Grow the training set from a candidate pool by active learning.
    Active(Common),
    /// Error Bar of the fitted model over a range of thresholds.
    Sweep(Common),
    /// Merge the model reports found under `--out` into comparison tables.
    Report(Common),
}

/// Failure category; each maps to one exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Chain,
}

impl Category {
    fn code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Chain => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Category::Config => "config_error",
            Category::Data => "data_error",
            Category::Chain => "chain_failure",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { category: Category::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { category: Category::Data, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let category = if e.is_chain_failure() {
            Category::Chain
        } else {
            match e {
                Error::InvalidArgument(_) | Error::Configuration(_) => Category::Config,
                Error::DegenerateEntry { .. } => Category::Chain,
                _ => Category::Data,
            }
        };
        Self { category, message: e.to_string() }
    }
}

/// One JSON object on a single line, so scripts can parse failures.
fn error_line(e: &CliError) -> String {
    serde_json::json!({ "error": e.category.name(), "exit_code": e.category.code(), "message": e.message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string().trim().replace('\n', " "));
            eprintln!("{}", error_line(&err));
            return ExitCode::from(err.category.code());
        }
    };
    let result = match cli.command {
        Command::Simulate(c) => commands::simulate(&c),
        Command::Fit(c) => commands::fit(&c),
        Command::Active(c) => commands::active(&c),
        Command::Sweep(c) => commands::sweep(&c),
        Command::Report(c) => report::run(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(e.category.code())
        }
    }
}
