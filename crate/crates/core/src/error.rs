use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("normalized angle u = {0} lies outside [-1, 1]")]
    AngleOutOfRange(f64),

    #[error("array size must be at least 1")]
    EmptyArray,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero-lag entry must be real, found imaginary part {0:.3e}")]
    ComplexZeroLag(f64),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("Toeplitz matrix is not positive semidefinite (minimum eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("beam norm {0:.9} deviates from 1 by more than 1e-6")]
    NonUnitBeam(f64),

    #[error("non-positive measurement mean {mean:.3e} at row {row}")]
    NonPositiveMean { row: usize, mean: f64 },

    #[error("criterion denominator {denominator:.3e} is below half the noise variance")]
    InfeasibleDesign { denominator: f64 },

    #[error("autocorrelation spectrum is negative ({value:.3e}) at u = {u:.6}")]
    NegativeSpectrum { u: f64, value: f64 },

    #[error("columns are not orthonormal (Gram residual {0:.3e})")]
    NotOrthonormal(f64),

    #[error("no linear oracle is available for the {0} feasible set")]
    NoLinearOracle(&'static str),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("no measurements available")]
    EmptyData,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
