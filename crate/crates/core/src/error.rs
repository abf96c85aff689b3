use thiserror::Error;

/// Errors raised by the numeric layers (matrices, polynomials, feature maps, attention).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("no even degree <= {max_degree} reaches relative error {eps} on [-{domain}, {domain}]")]
    DegreeOverflow { eps: f64, domain: f64, max_degree: usize },

    #[error("integer overflow computing {0}")]
    Overflow(String),

    #[error("basis of {size} monomials exceeds capacity {limit}")]
    Capacity { size: u128, limit: u128 },

    #[error("entries too large: score bound {score_bound} admits no certified polynomial")]
    EntriesTooLarge { score_bound: f64 },

    #[error("approximate row sum {row} is not positive")]
    Positivity { row: usize },

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("planning error: {0}")]
    Plan(String),

    #[error("simulation error: {0}")]
    Sim(#[from] crate::iosim::SimError),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
