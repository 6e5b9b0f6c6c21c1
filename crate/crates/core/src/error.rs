use thiserror::Error;

/// Errors raised while validating panels or computing estimates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unbalanced panel: {0}")]
    UnbalancedPanel(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("panel too small for cross-fitting: need N >= 4 and T >= 4, got N={n}, T={t}")]
    PanelTooSmall { n: usize, t: usize },

    #[error("cannot form {clusters} clusters from {points} points")]
    DegenerateInput { points: usize, clusters: usize },

    #[error("pseudo-distance needs at least 3 items, got {0}")]
    TooFewUnits(usize),

    #[error("singular design: smallest singular value {smallest_singular_value:.3e}")]
    SingularDesign { smallest_singular_value: f64 },

    #[error("no residual degrees of freedom left (dof = {0})")]
    InsufficientDof(i64),

    #[error("domain error: {0}")]
    DomainError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
