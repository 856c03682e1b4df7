//! Error type shared by every module.

use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or missing input data.
    Input,
    /// A numerical routine could not produce a result.
    Numerical,
    /// Inconsistent or out-of-range settings.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("rows with missing cells: {0:?}")]
    MissingCells(Vec<String>),

    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),

    #[error("series {0:?} has zero sample variance")]
    ZeroVariance(String),

    #[error("time axes of {0} and {1} do not match")]
    TimeMismatch(String, String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("too few observations: {0}")]
    TooFewObservations(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MissingFile(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::NonNumeric { .. }
            | Error::MissingCells(_)
            | Error::DuplicateLabel(_)
            | Error::ZeroVariance(_)
            | Error::TimeMismatch(..) => ErrorClass::Input,
            Error::Singular(_)
            | Error::RankDeficient(_)
            | Error::Degenerate(_)
            | Error::TooFewObservations(_) => ErrorClass::Numerical,
            Error::Dimension { .. } | Error::Config(_) => ErrorClass::Config,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
