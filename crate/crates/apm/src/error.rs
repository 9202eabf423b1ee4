//! Crate-wide error type.
//!
//! Variants are grouped by the process-exit category the CLI maps them to:
//! input errors (exit 2), construction errors (exit 3), and verification
//! failures (exit 4). Library callers match on the variant directly.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- input / validation ---
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0} (supported range {1})")]
    UnsupportedDimension(usize, &'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("polytope is unbounded (no finite support in some direction)")]
    Unbounded,

    #[error("polytope has empty interior (Chebyshev radius {0:.3e})")]
    EmptyInterior(f64),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("erosion depth {depth:.3e} leaves no interior (radius {radius:.3e})")]
    ErosionTooDeep { depth: f64, radius: f64 },

    #[error("precondition violated: {0}")]
    Precondition(&'static str),

    #[error("point is outside the regime bound: boundary distance {delta:.3e} > {limit:.3e}")]
    OutOfRegime { delta: f64, limit: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Parse(String),

    // --- construction ---
    #[error("construction failed: {0}")]
    Construction(String),

    #[error("coverage repair did not converge after {rounds} rounds; sample uncovered direction {direction:?}")]
    CoverageRepair { rounds: usize, direction: Vec<f64> },

    #[error("level count {0} exceeds the supported maximum {1}")]
    TooManyLevels(usize, usize),

    #[error("numeric failure: {0}")]
    Numeric(String),

    // --- verification ---
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    /// Process exit code for the CLI: 2 input, 3 construction, 4 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. }
            | Error::UnsupportedDimension(..)
            | Error::InvalidInput(_)
            | Error::Unbounded
            | Error::EmptyInterior(_)
            | Error::Infeasible
            | Error::ErosionTooDeep { .. }
            | Error::Precondition(_)
            | Error::OutOfRegime { .. }
            | Error::Io(_)
            | Error::Parse(_) => 2,
            Error::Construction(_)
            | Error::CoverageRepair { .. }
            | Error::TooManyLevels(..)
            | Error::Numeric(_) => 3,
            Error::Verification(_) => 4,
        }
    }
}
