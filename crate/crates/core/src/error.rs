//! Error type shared across the library.

use thiserror::Error;

/// Unified error type for model construction, validation, and solves.
#[derive(Debug, Error)]
pub enum Error {
    /// A coefficient definition is structurally or numerically invalid.
    #[error("invalid coefficient ({node}): {detail}")]
    InvalidCoefficient { node: &'static str, detail: String },

    /// The model wiring (phase count, birth routing, period mismatch) is inconsistent.
    #[error("model structure: {0}")]
    ModelStructure(String),

    /// Two models cannot be blended because their structure differs.
    #[error("blend mismatch: {0}")]
    BlendMismatch(String),

    /// A grid parameter is unusable (non-positive step, empty axis, ...).
    #[error("grid: {0}")]
    Grid(String),

    /// The evolved population vanished identically, so no growth factor exists.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// An iterative solve exhausted its iteration budget.
    #[error("no convergence after {max_periods} iterations (last residual {residual:e})")]
    NonConvergence { max_periods: usize, residual: f64 },

    /// The requested operation is only defined for a narrower model class.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// Assembling a dense operator would exceed the dimension cap.
    #[error("operator dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    /// Root bracketing failed for a scalar equation.
    #[error("bracket failure: {0}")]
    BracketFailure(String),

    /// Mass leaked through the age-domain truncation boundary beyond the limit.
    #[error("age-domain truncation spill {spill:e} exceeds limit {limit:e} per period")]
    TruncationExceeded { spill: f64, limit: f64 },

    /// The dual (adjoint) solve failed a consistency requirement.
    #[error("adjoint: {0}")]
    Adjoint(String),

    /// A verification routine was handed too little data to act on.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
