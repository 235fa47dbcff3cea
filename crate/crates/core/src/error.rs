use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants fall into three classes that the CLI maps onto exit codes:
/// usage/configuration (2), data (3) and numerical (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("record {record}: {message}")]
    MalformedRecord { record: u64, message: String },

    #[error("group {group_id} mixes positive and negative labels")]
    MixedLabelGroup { group_id: u64 },

    #[error("positive group {group_id} has no key candidate")]
    MissingKey { group_id: u64 },

    #[error("positive group {group_id} has {count} key candidates, expected exactly one")]
    MultipleKeys { group_id: u64, count: usize },

    #[error("negative group {group_id} contains a key candidate")]
    KeyOnNegative { group_id: u64 },

    #[error("group {group_id} is not contiguous or out of order at record {record}")]
    UnsortedGroups { group_id: u64, record: u64 },

    #[error("{path}: not a recognised dataset or model file ({reason})")]
    Format { path: PathBuf, reason: String },

    #[error("unsupported format version {found} (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) => 2,
            Error::Numerical(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
