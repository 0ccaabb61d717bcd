use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Model or run parameters fail validation.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Matrix/vector dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Sector-encoding lookups outside the valid range.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// Malformed circuit (bad qubit index, missing clbit, ...).
    #[error("circuit error: {0}")]
    Circuit(String),

    /// Iterative solver failed to reach its tolerance.
    #[error("solver did not converge: {0}")]
    Solver(String),

    /// Every trajectory was post-selected away before the run finished.
    #[error("all shots failed LCU post-selection at step {step}")]
    AllShotsFailed { step: usize },

    /// A calibration matrix is too ill-conditioned to invert.
    #[error("calibration matrix ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
