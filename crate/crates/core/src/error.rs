use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// Parsers never return these for bad records; malformed input shows up as
/// [`Diagnostic`](crate::ingest::Diagnostic) entries next to the parsed value.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prefix {0:?}: {1}")]
    InvalidPrefix(String, &'static str),

    #[error("invalid AS number {0:?}")]
    InvalidAsn(String),

    #[error("invalid VRP: {0}")]
    InvalidVrp(String),

    #[error("invalid announcement: {0}")]
    InvalidAnnouncement(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training set must contain both classes")]
    SingleClass,

    #[error("class {0} has no samples")]
    EmptyClass(&'static str),

    #[error("not enough samples for {folds} folds (smallest class has {min_class})")]
    TooFewSamples { folds: usize, min_class: usize },

    #[error("feature importance is only defined for random forests")]
    NotAForest,

    #[error("model format version {found} is not supported (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("store format version {found} is not supported (expected {expected})")]
    StoreVersion { found: u32, expected: u32 },

    #[error("quarantine monitoring for {key} is incomplete until {until}")]
    MonitoringIncomplete {
        key: String,
        until: chrono::NaiveDate,
    },

    #[error("missing {what} for {date}")]
    MissingInput {
        what: String,
        date: chrono::NaiveDate,
    },

    #[error("store is held by another writer; remove {} if no run is active", .0.display())]
    Locked(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
