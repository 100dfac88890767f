use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integration failed at tau = {tau}: {reason}")]
    Integration { tau: f64, reason: String },

    #[error("fold ambiguity: {0}")]
    FoldAmbiguity(String),

    #[error("series truncation: {0}")]
    Truncation(String),

    #[error("degenerate orientation: {0}")]
    DegenerateOrientation(String),

    #[error("seed degeneracy: {0}")]
    SeedDegeneracy(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
