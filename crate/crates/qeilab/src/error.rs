use thiserror::Error;

/// Errors surfaced by the numerical layers.
#[derive(Debug, Error)]
pub enum QeiError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("mollification scale {lambda} below grid resolution {spacing}")]
    UnresolvedScale { lambda: f64, spacing: f64 },

    #[error("kernel is not of positive type: min eigenvalue {min_eigenvalue:.3e} below -{tolerance:.3e}")]
    NotPositiveType { min_eigenvalue: f64, tolerance: f64 },

    #[error("non-finite entries encountered in {0}")]
    NonFinite(String),

    #[error("cone contains no lattice frequencies")]
    EmptyCone,

    #[error("mode cutoff insufficient: {0}")]
    CutoffInsufficient(String),

    #[error("chart coverage failure: {0}")]
    CoverageFailure(String),

    #[error("frequency integrand has not entered its decaying regime: {0}")]
    DivergentIntegrand(String),

    #[error("degenerate slice: {0}")]
    DegenerateSlice(String),

    #[error("theorem check failed: {0}")]
    BoundViolation(String),
}

pub type Result<T> = std::result::Result<T, QeiError>;
