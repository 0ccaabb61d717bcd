//! Experiment driver for the non-Hermitian ladder simulation stack.
//!
//! Wraps the core crate behind a config-file surface: named presets cover
//! each figure-level experiment (edge bursts, spectral scans, interacting
//! patterns, mitigation studies), runs emit deterministic CSV/JSON artifacts
//! plus static SVG plots, and every output records the config hash, seed,
//! and crate version that produced it.

pub mod commands;
pub mod config;
pub mod outputs;
pub mod pipeline;
pub mod plot;
pub mod presets;

/// Version string stamped into every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes: 0 success, 2 config error, 3 non-convergence.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or missing/invalid input files (exit 2).
    Config(String),
    /// A convergence or termination check failed (exit 3).
    NonConvergence(String),
    /// Unexpected runtime failure (exit 1).
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::NonConvergence(m) => write!(f, "non-convergence: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<edgeburst::Error> for CliError {
    fn from(e: edgeburst::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("io: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
