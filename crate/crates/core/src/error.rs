use thiserror::Error;

/// Errors reported by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("missing constant `{0}`")]
    MissingConstant(&'static str),

    #[error("invalid feasible set: {0}")]
    InvalidSet(String),

    #[error("point {0:?} lies outside the feasible set")]
    OutsideSet(Vec<f64>),

    #[error("invalid barycentric coordinates: {0}")]
    InvalidBarycentric(String),

    #[error("parameters inconsistent with family `{family}`: {reason}")]
    InconsistentFamily { family: String, reason: String },

    #[error("the minimizer of this instance is unknown")]
    UnknownMinimizer,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("infeasible query: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
