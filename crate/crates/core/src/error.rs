use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short to split (T = {0}, need at least 10)")]
    SeriesTooShort(usize),

    #[error("schema mismatch in {path}: {detail}")]
    SchemaMismatch { path: PathBuf, detail: String },

    #[error("unsorted input in {path} at row {row}")]
    UnsortedInput { path: PathBuf, row: usize },

    #[error("invalid timestamp {0:?}: expected ISO-8601 UTC")]
    InvalidTimestamp(String),

    #[error("out of grid: ({lat}, {lon}) is outside the cell-center hull")]
    OutOfGrid { lat: f64, lon: f64 },

    #[error("missing corner at cell ({row}, {col})")]
    MissingCorner { row: usize, col: usize },

    #[error("missing cell at ({row}, {col})")]
    MissingCell { row: usize, col: usize },

    #[error("no overlapping coverage")]
    NoOverlap,

    #[error("unfillable variable {0}: fewer than 2 present points")]
    UnfillableVariable(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("constant series")]
    ConstantSeries,

    #[error("insufficient decay points: {0} positive autocorrelations, need 2")]
    InsufficientDecayPoints(usize),

    #[error("degenerate regression")]
    DegenerateRegression,

    #[error("insufficient length: {have} hours, need {need}")]
    InsufficientLength { have: usize, need: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Input-schema errors map to exit code 2 in the CLI.
    pub fn is_schema_error(&self) -> bool {
        matches!(
            self,
            Error::SchemaMismatch { .. }
                | Error::UnsortedInput { .. }
                | Error::InvalidTimestamp(_)
                | Error::Io { .. }
                | Error::Csv(_)
        )
    }
}
