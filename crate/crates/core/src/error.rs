use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{column}` is constant")]
    ConstantColumn { column: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("insufficient rows: need at least {needed}, got {got}")]
    InsufficientRows { needed: usize, got: usize },

    #[error("residual vector is degenerate (variance ratio {ratio:e})")]
    DegenerateResidual { ratio: f64 },

    #[error("backfitting did not converge after {sweeps} sweeps (last change {last_change:e})")]
    NoConvergence { sweeps: usize, last_change: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("outcome has a single class")]
    SingleClass,

    #[error("perfect separation detected (weight norm {norm:e})")]
    Separation { norm: f64 },

    #[error("parameters are not standardized: implied Var(Y) = {var_y}")]
    NotStandardized { var_y: f64 },

    #[error("no successful replications to summarize")]
    EmptyResults,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
