use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure classes reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing value in {file} at line {line}, column {column}")]
    MissingValue {
        file: String,
        line: usize,
        column: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("binomial response must be coded 0/1, found {0}")]
    NonBinaryResponse(f64),
    #[error("binomial response contains only one class")]
    SingleClassResponse,
    #[error("duplicate column name `{0}`")]
    DuplicateColname(String),
    #[error("column `{0}` has zero variance")]
    DegenerateColumn(String),
    #[error("column `{0}` has zero variance and cannot be correlated")]
    ZeroVariance(String),
    #[error("parse error in {file} at line {line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no convergence after {iterations} iterations ({context})")]
    NonConvergence {
        iterations: usize,
        context: &'static str,
    },
    #[error("perfect separation: fitted probabilities pinned at 0 or 1")]
    PerfectSeparation,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("likelihood ratio statistic {0} is negative beyond tolerance")]
    NegativeDeviance(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("too few observations: {n} (need at least {min})")]
    TooFewObservations { n: usize, min: usize },
    #[error("duplicate position {position} within block `{block}`")]
    DuplicatePosition { block: String, position: i64 },
    #[error("no position given for column `{0}`")]
    MissingPosition(String),
    #[error("block map does not match the variables: {0}")]
    BlockMismatch(String),
    #[error("tree variable `{0}` is not a column of the data")]
    TreeDatasetMismatch(String),
    #[error("studies do not share an identical column set: {0}")]
    ColumnUniverseMismatch(String),
    #[error("unknown column name `{0}`")]
    UnknownColname(String),
    #[error("malformed tree file at line {line}: {msg}")]
    TreeFormat { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures caused by the input data rather than by numerics.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::NonConvergence { .. }
                | Error::PerfectSeparation
                | Error::DegenerateFit(_)
                | Error::NegativeDeviance(_)
                | Error::EmptyInput
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
