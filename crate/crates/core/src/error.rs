use std::path::PathBuf;

/// Errors produced across the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input to an operation (bad prompt id, token out of range,
    /// mismatched shapes, too few samples).
    #[error("input error: {0}")]
    Input(String),

    /// Invalid configuration. `path` names the offending field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// An output space too large to enumerate exactly.
    #[error(
        "capacity error: output space of {size} exceeds enumeration cap {cap}; \
         use the Monte-Carlo estimate (mc_expected_reward) instead"
    )]
    Capacity { size: u128, cap: u64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
