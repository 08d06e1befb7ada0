use std::path::PathBuf;

/// Errors raised by the library.
///
/// Disagreement between the parties is not an error; it is reported through
/// [`crate::ccr::Status::Disagreement`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A logarithmic barrier was evaluated outside its domain.
    #[error("barrier violated: cp gain {cp_gain}, cdn gain {cdn_gain}")]
    Barrier { cp_gain: f64, cdn_gain: f64 },

    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    #[error("instance too large for the oracle: {variables} variables (limit {limit})")]
    TooLarge { variables: usize, limit: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
