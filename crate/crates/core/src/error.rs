use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An OAM index falls outside the range a calibration or kernel covers.
    #[error("ℓ = {ell} outside range [{lo}, {hi}]")]
    OutOfRange { ell: i64, lo: i64, hi: i64 },

    /// Shapes or supports of two inputs do not agree.
    #[error("input mismatch: {0}")]
    Input(String),

    #[error("invalid sorter geometry: {0}")]
    Geometry(String),

    #[error("underdetermined fit: {0}")]
    UnderdeterminedFit(String),

    /// The constrained solver stopped at its iteration cap.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
