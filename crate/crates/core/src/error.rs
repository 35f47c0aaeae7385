use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contemporaneous matrix (I - W_c) is numerically singular")]
    SingularContemporaneous,

    #[error("contemporaneous matrix contains a cycle")]
    CyclicContemporaneous,

    #[error("graph contains a cycle but an acyclic graph is required")]
    CyclicGraph,

    #[error("process is not stable: companion spectral radius {radius:.6} >= 1 - margin")]
    Unstable { radius: f64 },

    #[error("simulation overflow at step {step}: |x| exceeded 1e12")]
    NumericalOverflow { step: usize },

    #[error("column {column} is constant and cannot be standardized")]
    DegenerateColumn { column: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("insufficient samples: need more than {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("no admissible node pairs; sortability is undefined")]
    NoAdmissiblePairs,

    #[error("optimizer did not reach the acyclicity tolerance: h = {h:.3e} after {outer} outer iterations")]
    NotConverged { h: f64, outer: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{path}: malformed cell at row {row}, column {col}: {msg}")]
    Malformed {
        path: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("{0}: file is empty or has no data rows")]
    Empty(PathBuf),

    #[error("{path}: matrix is not square ({rows} rows, {cols} columns)")]
    NonSquare {
        path: PathBuf,
        rows: usize,
        cols: usize,
    },

    #[error("{path}: entry at row {row}, column {col} is not 0 or 1")]
    NonBinary { path: PathBuf, row: usize, col: usize },

    #[error("{path}: schema error: {msg}")]
    Schema { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad arguments.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidConfig(_))
    }
}
