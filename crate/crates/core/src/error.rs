use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by dataset loading, model construction and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    #[error("{file}: {message}")]
    Parse { file: String, message: String },

    /// A data or configuration problem, naming the offending entity.
    #[error("validation failed for {entity}: {message}")]
    Validation { entity: String, message: String },

    #[error("{model} is infeasible: {diagnosis}")]
    Infeasible { model: &'static str, diagnosis: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("dual values unavailable: {0}")]
    DualsUnavailable(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// An error raised inside a named pipeline stage.
    #[error("{stage}: {inner}")]
    Stage { stage: String, inner: Box<Error> },
}

impl Error {
    pub(crate) fn validation(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            entity: entity.into(),
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            inner: Box::new(self),
        }
    }

    /// The error with any stage context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { inner, .. } => inner.root(),
            other => other,
        }
    }

    /// True for errors caused by bad input rather than by a solve.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::MissingFile(_) | Error::Parse { .. } | Error::Validation { .. } | Error::Invalid(_) | Error::Csv(_) | Error::Json(_)
        )
    }

    /// True for infeasible, unbounded or failed solves.
    pub fn is_solver(&self) -> bool {
        matches!(self.root(), Error::Infeasible { .. } | Error::Solver(_) | Error::DualsUnavailable(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
