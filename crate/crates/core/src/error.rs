//! Error types shared across the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Invalid configuration value (bad grid size, empty proportions, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A quantity violated a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A density time slice carried no mass and cannot be normalized.
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Explicit FPK step would be unstable at the requested resolution.
    #[error("CFL stability violated: advection {advection:.4} + diffusion {diffusion:.4} = {total:.4} > {limit}")]
    CflViolation {
        advection: f64,
        diffusion: f64,
        total: f64,
        limit: f64,
    },

    /// Solver produced NaN/Inf or a runaway residual.
    #[error("solver diverged at iteration {iteration} (step product {step_product:.4}): {detail}")]
    Divergence {
        iteration: usize,
        step_product: f64,
        detail: String,
    },

    /// CSV / file I/O failure, with the offending path.
    #[error("i/o error at {path}: {detail}")]
    Io { path: String, detail: String },
}
