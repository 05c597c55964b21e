use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("linearization failed: {0}")]
    LinearizationFailure(String),
    #[error("filter degeneracy: {0}")]
    FilterDegeneracy(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("missing lookup table for {scenario} at e={level}; build it with `{command}` or pass --build-tables")]
    MissingTable {
        scenario: String,
        level: f64,
        command: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InstanceTooLarge(_) => "instance-too-large",
            Error::InvalidModel(_) => "invalid-model",
            Error::InvalidCovariance(_) => "invalid-covariance",
            Error::LinearizationFailure(_) => "linearization-failure",
            Error::FilterDegeneracy(_) => "filter-degeneracy",
            Error::InvalidScenario(_) => "invalid-scenario",
            Error::MissingTable { .. } => "missing-table",
            Error::Io { .. } => "io",
            Error::Json { .. } => "malformed-json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::InvalidScenario(_) | Error::InvalidModel(_) => 3,
            Error::MissingTable { .. } => 4,
            Error::Io { .. } | Error::Json { .. } | Error::Csv(_) => 5,
            Error::InstanceTooLarge(_) => 6,
            Error::InvalidCovariance(_) | Error::LinearizationFailure(_) | Error::FilterDegeneracy(_) => 7,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
