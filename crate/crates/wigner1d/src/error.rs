//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Construction rejected: a parameter violates its invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation was called with input outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Power iteration ran out of iterations before the Rayleigh
    /// quotient settled. Carries the last iterate for post-mortems.
    #[error("power iteration did not converge after {iterations} iterations (z0 ~ {z0_last:.6e}, residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        z0_last: f64,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    /// A Monte Carlo estimate came out unusable (for example a
    /// nonpositive chamber amplitude from a too-small ensemble).
    #[error("estimate failed: {0}")]
    Estimate(String),

    /// Not enough samples / effective samples for the request.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// Oracle grids disagree beyond the trust threshold; both values
    /// are carried so the caller can inspect them.
    #[error("oracle grid too coarse: estimates {coarse:.10e} and {fine:.10e} disagree by {disagreement:.3e} (> {threshold:.3e})")]
    OracleResolution {
        coarse: f64,
        fine: f64,
        disagreement: f64,
        threshold: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
