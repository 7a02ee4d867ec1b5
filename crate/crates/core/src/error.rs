use thiserror::Error;

use crate::model::{ExtendedState, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or out-of-range configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A modelling assumption does not hold; the report lists every check.
    #[error("validation failed:\n{0}")]
    Validation(Box<ValidationReport>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A reward or field evaluation produced a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("state error: {0}")]
    State(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Integration(#[from] IntegrationError),

    #[error("failed to parse {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

/// Integration failures carry the last state that passed the finiteness check.
#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("non-finite state at t = {t}")]
    NonFinite {
        t: f64,
        last_good: Box<ExtendedState>,
    },

    #[error("step size underflow at t = {t} (h = {step:e})")]
    StepUnderflow {
        t: f64,
        step: f64,
        last_good: Box<ExtendedState>,
    },
}

impl IntegrationError {
    pub fn last_good(&self) -> &ExtendedState {
        match self {
            IntegrationError::NonFinite { last_good, .. } => last_good,
            IntegrationError::StepUnderflow { last_good, .. } => last_good,
        }
    }
}
