use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("nonpositive weight at row {0}")]
    NonpositiveWeight(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("singular map: |det| = {0:e}")]
    SingularMap(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero mass in {0}")]
    ZeroMass(String),

    #[error("evaluation at the pole (z = 0)")]
    AtPole,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
