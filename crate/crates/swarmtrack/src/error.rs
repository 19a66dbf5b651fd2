use std::path::PathBuf;

/// Errors surfaced by scenario loading, estimation, and result emission.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scenario field violates its constraint.
    #[error("invalid scenario: field `{field}`: {constraint}")]
    Config { field: String, constraint: String },

    /// A covariance or information matrix could not be inverted,
    /// which signals filter divergence.
    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    /// Trial statistics need at least two trials.
    #[error("summary statistics need at least 2 trials, got {got}")]
    NotEnoughTrials { got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
