use thiserror::Error;

pub type Result<T> = std::result::Result<T, TrexError>;

#[derive(Debug, Error)]
pub enum TrexError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("column {0} is identically zero")]
    ZeroColumn(usize),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("design columns are not normalized to sqrt(n); normalize first or set allow_unnormalized")]
    Unnormalized,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("objective undefined: dual norm of X^T(Y - X beta) is zero")]
    Domain,

    #[error(
        "degenerate optimum with u_hat = 0; use the constrained variant or check the problem scaling"
    )]
    Degenerate,

    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
