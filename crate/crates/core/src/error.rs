use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}:{line}: malformed interaction line: {reason}")]
    MalformedLine { path: PathBuf, line: usize, reason: String },

    #[error("user {user} has {count} interactions; leave-one-out needs at least 3")]
    TooFewInteractions { user: u64, count: usize },

    #[error("edge ({user}, {item}) is out of range for {n_users} users and {n_items} items")]
    EdgeOutOfRange {
        user: usize,
        item: usize,
        n_users: usize,
        n_items: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no valid negative item exists for user {user}")]
    NoNegativeItem { user: usize },

    #[error("client has no positive items")]
    NoPositiveItem,

    #[error("no noise, unbounded budget")]
    UnboundedBudget,

    #[error("all participating clients report zero data")]
    ZeroDataCount,

    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
