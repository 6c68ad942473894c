use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, UnmixError>;

#[derive(Debug, Error)]
pub enum UnmixError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("payload size mismatch in {path}: header implies {expected} values, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("negative reflectance {value} at row {row}, column {col}")]
    Negative { row: usize, col: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "data is rank deficient: need rank {needed}, found {found} significant singular values"
    )]
    RankDeficient { needed: usize, found: usize },

    #[error("degenerate simplex: zero volume after {attempts} initializations")]
    DegenerateSimplex { attempts: usize },

    #[error("signal has zero energy, SNR is undefined")]
    ZeroSignal,

    #[error("non-finite value in {matrix} at iteration {iteration}")]
    NonFiniteState {
        iteration: usize,
        matrix: &'static str,
    },
}

impl UnmixError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UnmixError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            UnmixError::NonFiniteState { .. }
                | UnmixError::DegenerateSimplex { .. }
                | UnmixError::RankDeficient { .. }
                | UnmixError::ZeroSignal
        )
    }
}
