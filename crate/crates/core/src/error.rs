use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("row {row} has norm {norm}, expected a unit vector")]
    NotUnitNorm { row: usize, norm: f64 },

    #[error("invalid positive pairing: {0}")]
    InvalidPairing(String),

    #[error("batch needs more than 2 rows, got {0}")]
    BatchTooSmall(usize),

    #[error("orthogonal direction draw degenerate after {attempts} attempts")]
    DegenerateDraw { attempts: usize },

    #[error("index set is empty")]
    EmptyIndexSet,

    #[error("index {index} out of range for batch of {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("anchor {0} has no registered positive")]
    MissingPositive(usize),

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("candidate store exhausted: needed {needed}, available {available}")]
    StoreExhausted { needed: usize, available: usize },

    #[error("invalid rank window [{min}, {max}] (must satisfy 1 <= min <= max <= {cap})")]
    InvalidWindow { min: f64, max: f64, cap: f64 },

    #[error("rolling window of {window} steps exceeds the regime length of {regime} steps")]
    WindowTooLong { window: usize, regime: usize },

    #[error("eigendecomposition did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
