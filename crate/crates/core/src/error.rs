use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("Stieltjes transform evaluated on the real axis at eigenvalue {0}")]
    SingularPoint(f64),

    #[error("vector is not unit-normalized (norm {0})")]
    NotNormalized(f64),

    #[error("block loadings produce an off-diagonal entry {value} >= 1 at ({row}, {col})")]
    InvalidLoading { row: usize, col: usize, value: f64 },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid moving-window plan: {0}")]
    InvalidPlan(String),

    #[error("entry ({row}, {col}) = {value} is not a valid correlation")]
    InvalidCorrelation { row: usize, col: usize, value: f64 },

    #[error("first-step estimate has non-positive diagonal entry {value} at index {index}")]
    DegenerateFirstStep { index: usize, value: f64 },

    #[error("matrix is singular or not positive definite (min eigenvalue {min_eigenvalue:e})")]
    SingularMatrix { min_eigenvalue: f64 },

    #[error("undefined: {0}")]
    Undefined(String),
}
