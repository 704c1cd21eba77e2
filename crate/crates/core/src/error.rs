use std::path::PathBuf;

use crate::ComplexMatrix;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// An iterative solver left its stable region. `last_stable` holds the
    /// final iterate that still passed the divergence guard, when there was one.
    #[error("divergence: {message}")]
    Divergence {
        message: String,
        last_stable: Option<Box<ComplexMatrix>>,
    },

    #[error("scaling ambiguity cannot be resolved: column {column} of the factor estimate is zero")]
    AmbiguityUnresolvable { column: usize },

    #[error("tracker state is stale: {0}")]
    StaleState(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericFailure(msg.into())
    }

    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Config(_) | Error::StaleState(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
