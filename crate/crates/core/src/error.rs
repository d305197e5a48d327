use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the assemblage pipeline.
#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: field `{field}` out of range: {value}")]
    CoordinateRange {
        path: PathBuf,
        line: u64,
        field: &'static str,
        value: f64,
    },

    #[error("unknown status `{0}` (expected one of LC, NT, VU, EN, CR)")]
    UnknownStatus(String),

    #[error("unknown status source `{0}` (expected assessed or predicted)")]
    UnknownSource(String),

    #[error("duplicate status entry for species `{species}` from source {source_kind}")]
    DuplicateStatus {
        species: String,
        source_kind: &'static str,
    },

    #[error("no status known for species {0}")]
    MissingStatus(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("species {0} has no continent in the geographic prior")]
    NotInPrior(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error("config error: {0}")]
    Config(String),
}

impl AtlasError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AtlasError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        AtlasError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = AtlasError> = std::result::Result<T, E>;
