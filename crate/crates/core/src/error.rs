use thiserror::Error;

use crate::stats::StatsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain must have positive finite width and height, got {width} x {height}")]
    InvalidDomain { width: f64, height: f64 },
    #[error("{field}: coordinate outside the domain")]
    OutsideDomain { field: String },
    #[error("{field}: value must be finite")]
    NonFinite { field: String },
    #[error("{field}: at least 2 required")]
    TooFewElements { field: &'static str },
    #[error("{field}: {message}")]
    Schema { field: String, message: String },
    #[error("{0}")]
    InvalidConfig(String),
    #[error("placement infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from invalid input rather than an infeasible
    /// request.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Infeasible(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
