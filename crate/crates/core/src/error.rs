use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("placeholder `{0}` is not bound")]
    Unbound(String),
    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("graph was built without higher-order support; cannot record gradient nodes")]
    HigherOrderDisabled,
    #[error("non-finite {0}")]
    NonFiniteValue(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("model has no `{0}`")]
    Missing(String),
}
