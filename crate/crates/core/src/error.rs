use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Bad or unknown key in an experiment configuration.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// The exact oracle was asked for more work than the configured budget allows.
    #[error(
        "oracle budget exceeded: J^I = {states} states x T = {slots} slots = {product} \
         (limits: {max_states} states, {max_state_slots} state-slots)"
    )]
    BudgetExceeded {
        states: u128,
        slots: usize,
        product: u128,
        max_states: u128,
        max_state_slots: u128,
    },

    /// A malformed row in an ingested file.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// Files parse but disagree on dimensions or identifiers.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
