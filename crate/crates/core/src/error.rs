use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

/// Errors raised by ingestion, preprocessing, raster handling and scoring.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("gap in daily series between {before} and {after}")]
    DateGap { before: NaiveDate, after: NaiveDate },

    #[error("series too short: {len} days, need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("PCA needs k <= min(rows, cols): k = {k}, rows = {rows}, cols = {cols}")]
    ComponentsTooLarge { k: usize, rows: usize, cols: usize },

    #[error("model has not been fitted")]
    Unfitted,

    #[error("all pixels are masked")]
    AllMasked,

    #[error("missing {band} image for {date}")]
    MissingBandDay { band: String, date: NaiveDate },

    #[error("date axes of ensemble members differ")]
    DateAxisMismatch,

    #[error("forecast has no truth values")]
    MissingTruth,

    #[error("truth is constant; R² is undefined")]
    DegenerateTarget,

    #[error("malformed raster manifest {path}: {message}")]
    BadManifest { path: PathBuf, message: String },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path)
        } else {
            DataError::Io { path, source }
        }
    }
}
