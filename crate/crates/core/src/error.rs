use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum IppError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} outside the query domain (0, {upper}]")]
    OutOfDomain { t: f64, upper: f64 },

    #[error("intensity {value} exceeds the dominating bound {bound} at t = {t}")]
    BoundViolated { t: f64, value: f64, bound: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(
        "rank deficient: requested {requested} singular triplets but numerical rank is {rank}"
    )]
    RankDeficient {
        requested: usize,
        rank: usize,
        /// Triplets that were resolved before the spectrum ran out.
        available: Box<Option<crate::subspace::SvdResult>>,
    },

    #[error(
        "solver did not converge after {restarts} restarts (max relative residual {residual:e})"
    )]
    NonConvergence { restarts: usize, residual: f64 },

    #[error("frame is not orthonormal: ||V^T V - I||_F = {0:e}")]
    NotOrthonormal(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IppError>;
