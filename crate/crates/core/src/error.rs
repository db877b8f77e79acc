use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DdaeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix pencil (E, A) is singular")]
    SingularPencil,

    #[error("quasi-Weierstrass decomposition failed: {reason}")]
    DecompositionFailure { reason: String, rank_ambiguous: bool },

    #[error("t = {t} lies outside the domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },

    #[error("invalid piecewise polynomial: {0}")]
    InvalidPiecewise(String),

    #[error("history function is not admissible (residual {residual:.3e})")]
    NotAdmissible { residual: f64 },

    #[error("inconsistent restart of segment {segment} at t = {time} (residual {residual:.3e})")]
    InconsistentRestart { segment: usize, time: f64, residual: f64 },

    #[error("collocation matrix is singular on segment {segment}")]
    CollocationSingular { segment: usize },

    #[error("system is not of smoothing type")]
    NotSmoothingType,

    #[error("no characteristic roots found in the search box")]
    NoRootsFound,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = DdaeError> = std::result::Result<T, E>;
