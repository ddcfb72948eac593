//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("quadrature grid mismatch: {0}")]
    GridMismatch(String),

    #[error("grid captures {captured:.9} of unit mass, needs at least {required:.9}")]
    GridTooSmall { captured: f64, required: f64 },

    #[error("input grid too coarse: convolution kernel std {kernel_std:.3e} is under-resolved by spacing {spacing:.3e}")]
    GridTooCoarse { kernel_std: f64, spacing: f64 },

    #[error("Fock truncation insufficient: neglected tail weight {tail:.3e} exceeds {limit:.1e}")]
    TruncationInsufficient { tail: f64, limit: f64 },

    #[error("photon number {n} exceeds supported maximum {max}")]
    PhotonNumberTooLarge { n: usize, max: usize },

    #[error("matrix is not square: {rows} rows x {cols} cols")]
    NotSquare { rows: usize, cols: usize },

    #[error("no sample falls inside the histogram range")]
    EmptyRange,

    #[error("SPDC calibration failed: zero spontaneous counts")]
    CalibrationFailed,

    #[error("no unpinned probe with finite uncertainty")]
    NoValidProbe,

    #[error("NNLS iteration limit ({limit}) reached; best objective {objective:.6e}")]
    NnlsIterationLimit {
        limit: usize,
        objective: f64,
        best: Vec<f64>,
    },

    #[error("{file}: invalid or missing field `{field}`: {message}")]
    Schema {
        file: String,
        field: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 input validation, 2 I/O, 3 solver non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::NnlsIterationLimit { .. } => 3,
            _ => 1,
        }
    }
}
