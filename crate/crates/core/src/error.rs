use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("row {row} of the demixing matrix has zero norm")]
    ZeroRow { row: usize },

    #[error("covariance is rank deficient along eigen-direction {dimension} (eigenvalue {eigenvalue:.3e})")]
    RankDeficient { dimension: usize, eigenvalue: f64 },

    #[error("demixing matrix is singular (|det| = {det:.3e})")]
    SingularDemixer { det: f64 },

    #[error("divergence became non-finite at iteration {iteration}; step size too large")]
    NonFinite { iteration: usize },

    #[error("channel {channel} has zero variance")]
    ZeroVariance { channel: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected: expected.into(),
            found: found.into(),
        }
    }
}
