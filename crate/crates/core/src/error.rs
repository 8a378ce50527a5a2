use thiserror::Error;

use crate::metric::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },

    #[error("negative entry {value} at ({i}, {j})")]
    NegativeEntry { i: usize, j: usize, value: f64 },

    #[error("non-finite entry at ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("asymmetric entry at ({i}, {j}): {upper} vs {lower}")]
    Asymmetric {
        i: usize,
        j: usize,
        upper: f64,
        lower: f64,
    },

    #[error("unknown point `{0}`")]
    UnknownPoint(String),

    #[error("duplicate point `{0}`")]
    DuplicatePoint(String),

    #[error("subset must be nonempty")]
    EmptySubset,

    #[error("point index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("metric `{name}` fails the axioms: {report}")]
    InvalidMetric {
        name: String,
        report: ValidationReport,
    },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("snapshots taken at different levels ({0} vs {1})")]
    LevelMismatch(u32, u32),

    #[error("requested error bound {requested:e} not certifiable with truncation level <= {max_level} (best {best:e})")]
    CertificationFailed {
        requested: f64,
        best: f64,
        max_level: u32,
    },

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
