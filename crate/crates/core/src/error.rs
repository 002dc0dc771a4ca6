use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension {0} out of range (must be 1..=24)")]
    DimensionOutOfRange(usize),

    #[error("coordinate {index} is negative ({value}); points must lie in the orthant")]
    NegativeCoordinate { index: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite integrand sample {value} at node {node:?}")]
    NonFiniteSample { node: Vec<f64>, value: f64 },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("conditional for coordinate {coord} has no representable mass")]
    DegenerateConditional { coord: usize },

    #[error("trajectory covers {total} time units, {requested} requested")]
    PathTooShort { requested: f64, total: f64 },

    #[error("site {0:?} lies outside the lattice")]
    SiteOutOfLattice(Vec<usize>),

    #[error("test function support {support:?} exceeds the quadrature box [0,{trunc}]^n")]
    SupportOutsideBox { support: Vec<f64>, trunc: f64 },

    #[error("quadratic-variation compensator vanishes: observable is flat on the visited strata")]
    DegenerateCompensator,
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        CoreError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
