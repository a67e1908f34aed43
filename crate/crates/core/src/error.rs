use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("lag {lag} out of range for a series of length {len}")]
    LagOutOfRange { lag: i64, len: usize },

    #[error("reference matrix has zero Frobenius norm")]
    DegenerateReference,

    #[error("singular regression design: {0}")]
    SingularDesign(String),

    #[error("singular factor system: {0}")]
    SingularSystem(String),

    #[error("degenerate factor: {0}")]
    DegenerateFactor(String),

    #[error("{what} = {value} out of range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("malformed frequency grid: {0}")]
    MalformedGrid(String),

    #[error("covariance not real: max |imag| = {max_imag:e} exceeds {limit:e}")]
    NonRealCovariance { max_imag: f64, limit: f64 },

    #[error("cannot orthogonalize {rows} loading rows over {m} series")]
    InfeasibleOrthogonalization { rows: usize, m: usize },

    #[error("generalized eigenproblem: {0}")]
    Eigen(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
