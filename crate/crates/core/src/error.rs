use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or signal parameter violates its invariant.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    /// Doubling the quadrature order moved the result by more than the tolerance.
    #[error("quadrature not converged at detuning {detuning_hz} Hz: relative change {change:.3e} on doubling")]
    Accuracy { detuning_hz: f64, change: f64 },

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("transfer function does not cover the signal band: {0}")]
    Coverage(String),

    #[error("lock-in output not settled: {0}")]
    Settling(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("config syntax error at line {line}, column {column}: {message}")]
    ConfigSyntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error at `{path}`: {message}")]
    ConfigValue { path: String, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::ConfigSyntax { .. }
            | Error::ConfigValue { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
