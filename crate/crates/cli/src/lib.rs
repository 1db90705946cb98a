//! Command-line harness for the csi-imager pipeline.
//!
//! Each subcommand is a plain function taking its parsed arguments and a
//! writer for human-readable output, so tests can drive the same code paths as
//! the binary.

pub mod args;
pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use csi_imager::Error as CoreError;
use thiserror::Error;

pub use args::{Cli, Command};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// I/O failures and anything not covered below.
    pub const OTHER: i32 = 1;
    /// Bad flags, bad config file, invalid parameter values.
    pub const CONFIG: i32 = 2;
    /// Malformed or unusable dataset, model, or report files.
    pub const DATA_FORMAT: i32 = 3;
    /// Model and data shapes disagree.
    pub const DIMENSION: i32 = 4;
    /// Training produced non-finite values.
    pub const DIVERGENCE: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Parse { .. } => exit::DATA_FORMAT,
            CliError::Io { .. } => exit::OTHER,
            CliError::Core(e) => match e {
                CoreError::Config(_) => exit::CONFIG,
                CoreError::Format { .. } | CoreError::Alignment(_) | CoreError::Ingest(_) | CoreError::Training(_) => {
                    exit::DATA_FORMAT
                }
                CoreError::Dimension(_) | CoreError::Metric(_) => exit::DIMENSION,
                CoreError::Diverged { .. } => exit::DIVERGENCE,
                CoreError::Io(_) => exit::OTHER,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Runs a parsed command line, writing progress and results to `out`.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, out),
        Command::Pretrain(a) => commands::pretrain(a, out).map(|_| ()),
        Command::RunCl(a) => commands::run_cl(a, out).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate(a, out).map(|_| ()),
        Command::Report(a) => report::report(a, out),
    }
}
