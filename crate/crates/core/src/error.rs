use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input has the wrong shape (non-square matrix, mismatched lengths).
    #[error("structural error: {0}")]
    Structural(String),

    /// A field failed validation (NaN entries, negative constants, ...).
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    /// A time or parameter outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Incompatible discretization settings.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A state left the nonnegative cone by more than roundoff.
    #[error("cone violation: entry {index} = {value:e} is negative")]
    ConeViolation { index: usize, value: f64 },

    /// Configuration text could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// The generator does not give an exponentially stable semigroup.
    #[error("semigroup is not exponentially stable (lambda1 = {lambda1})")]
    NotExponentiallyStable { lambda1: f64 },

    /// A hypothesis needed by the operation does not hold.
    #[error("hypothesis {0} does not hold")]
    Hypothesis(String),

    /// `I - T(omega)` is numerically singular.
    #[error("I - T(omega) is singular (condition {condition:e}); offending eigenvalue of A: {eigenvalue}")]
    Singular { condition: f64, eigenvalue: String },

    /// The characteristic denominator of a Fourier mode vanishes.
    #[error("resonance at Fourier mode m = {mode} (|denominator| = {magnitude:e})")]
    Resonance { mode: i64, magnitude: f64 },

    /// The solution left every finite bound.
    #[error("divergence after t = {last_finite_time}")]
    Divergence { last_finite_time: f64 },

    /// An iterative method failed to converge.
    #[error("numerical error: {method} did not converge after {iterations} iterations ({detail})")]
    Numerical {
        method: String,
        iterations: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
