use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LqError>;

#[derive(Debug, Error)]
pub enum LqError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { what: String, min_eigenvalue: f64 },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid problem: {0}")]
    Invalid(ValidationReport),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error{}: {key}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        key: String,
        message: String,
    },

    #[error("empty input: no records to summarize")]
    EmptyStats,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LqError {
    pub(crate) fn not_pd(what: impl Into<String>, min_eigenvalue: f64) -> Self {
        LqError::NotPositiveDefinite {
            what: what.into(),
            min_eigenvalue,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        LqError::Dimension(msg.into())
    }
}

/// One violated problem invariant together with the quantity that was measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub key: String,
    pub message: String,
    pub measured: Option<f64>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.key, self.message)?;
        if let Some(v) = self.measured {
            write!(f, " (measured {v:e})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn push(&mut self, key: &str, message: &str, measured: Option<f64>) {
        self.violations.push(Violation {
            key: key.to_string(),
            message: message.to_string(),
            measured,
        });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(LqError::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}
