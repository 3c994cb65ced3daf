use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Gram matrix (or another matrix that must be positive definite) failed the
    /// pivot test during Cholesky factorization.
    #[error("matrix is rank deficient: pivot {pivot:e} at column {column} below threshold {threshold:e}")]
    RankDeficient {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("degenerate degrees of freedom: N = M = {0}, residual variance undefined")]
    DegenerateDof(usize),

    #[error("prior covariance is not positive definite")]
    SingularPrior,

    #[error("cannot compare fake and proper evidences")]
    MixedKinds,

    #[error("every score is -inf, no weights can be formed")]
    AllDegenerate,

    #[error("ordering constraints exclude every grid point")]
    EmptyFeasibleGrid,

    #[error("tensor quadrature supports M <= 2, got M = {0}")]
    DimensionTooLarge(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two algebraically equivalent computations disagreed beyond tolerance.
    #[error("{what}: routes disagree (relative discrepancy {discrepancy:e} > {tolerance:e})")]
    RouteDisagreement {
        what: &'static str,
        discrepancy: f64,
        tolerance: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
