//! Crate-wide error type.
//!
//! Numerical preconditions (grid resolution windows, parameter ranges,
//! quadrature convergence) are reported as typed errors rather than panics so
//! the experiment harness can isolate failing cells and keep going.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid construction rejected (n not a power of two, n < 32, L <= 0, ...).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A parameter is outside its documented range.
    #[error("invalid parameter {name}: {detail}")]
    InvalidParam { name: &'static str, detail: String },

    /// The requested (alpha, t) pair cannot be represented on the grid:
    /// the kernel width t^{1/alpha} must span at least 4 grid cells and at
    /// most L/16.
    #[error("resolution window violated: {0}")]
    ResolutionWindow(String),

    /// Oscillatory quadrature failed to reach its target accuracy.
    #[error("quadrature did not converge: achieved error estimate {achieved:.3e}, target {target:.3e}")]
    QuadratureNoConvergence { achieved: f64, target: f64 },

    /// Negative-order fractional Laplacian on a field with nonzero mean.
    #[error("negative-order multiplier on a field with nonzero mean ({mean:.3e}); project the mean first")]
    NonzeroMean { mean: f64 },

    /// A weighted-norm window reached into the wrap-contaminated outer region.
    #[error("window radius {radius} exceeds safe region {max} for box length {box_length}")]
    WindowTooLarge {
        radius: f64,
        max: f64,
        box_length: f64,
    },

    /// Rate fit rejected: too few samples or too little dynamic range.
    #[error("fit rejected: {0}")]
    FitSpan(String),

    /// Time stepper detected a non-finite value; the state dump path is
    /// embedded in the message.
    #[error("non-finite field value at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },

    /// CFL violation under the configured step rule.
    #[error("CFL violation at t = {t}: dt {dt:.3e} exceeds limit {limit:.3e}")]
    Cfl { t: f64, dt: f64, limit: f64 },

    /// Picard iteration left the contraction regime.
    #[error("Picard iteration diverged at iterate {iterate}: norm ratio {ratio:.3e}")]
    PicardDiverged { iterate: usize, ratio: f64 },

    /// Configuration file problems, with the offending key path.
    #[error("config error at `{path}`: {detail}")]
    Config { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            detail: detail.into(),
        }
    }

    pub fn config(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
