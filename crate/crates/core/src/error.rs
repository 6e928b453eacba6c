use thiserror::Error;

use crate::sdp::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix side {side} does not match product of dims {dims:?}")]
    DimensionMismatch { dims: Vec<usize>, side: usize },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("matrix is not Hermitian: max deviation {deviation:e} exceeds {tol:e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("operator is not positive semidefinite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("trace {trace} differs from 1 by more than {tol:e}")]
    BadTrace { trace: f64, tol: f64 },

    #[error("factor index {index} out of range for {factors} factors")]
    FactorOutOfRange { index: usize, factors: usize },

    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Kraus operators violate completeness: max eigenvalue of sum K^dag K is {0}")]
    Completeness(f64),

    #[error("POVM invalid: {0}")]
    InvalidPovm(String),

    #[error("SDP problem invalid: {0}")]
    InvalidProblem(String),

    #[error("SDP solver ended with status {status:?}")]
    Solver { status: SolveStatus },

    #[error("dual certificate infeasible: {0}")]
    InfeasibleCertificate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
