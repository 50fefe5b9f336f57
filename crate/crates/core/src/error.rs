use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("panel grid incomplete: no observation for region {region}, quarter {quarter}")]
    GridIncomplete { region: usize, quarter: usize },

    #[error("duplicate observation for region {region}, quarter {quarter}")]
    DuplicateCell { region: usize, quarter: usize },

    #[error("inconsistent counts in row {row}: {reason}")]
    InconsistentCounts { row: usize, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("adjacency is not symmetric: {0} lists {1} but {1} does not list {0}")]
    Asymmetry(usize, usize),

    #[error("region graph is disconnected (component sizes {0:?})")]
    DisconnectedGraph(Vec<usize>),

    #[error("model specification error: {0}")]
    Spec(String),

    #[error("link domain error: eta = {eta} is outside the valid range for {family}")]
    LinkDomain { family: &'static str, eta: f64 },

    #[error("chain {chain}: initial log posterior is not finite")]
    NonFiniteStart { chain: usize },

    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn spec(message: impl Into<String>) -> Self {
        Error::Spec(message.into())
    }
}
