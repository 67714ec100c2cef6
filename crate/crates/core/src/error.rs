use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("distribution has no entries")]
    Empty,
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("non-finite weight at index {index}")]
    NonFiniteWeight { index: usize },
    #[error("weights sum to zero")]
    ZeroMass,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("enumeration of {size} elements exceeds the cap of {cap}")]
    EnumerationCapExceeded { size: u128, cap: usize },
    #[error("payoff entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("solver hit the iteration cap of {cap} before certification")]
    Timeout { cap: usize },
    #[error("solver finished with duality gap {gap:e} above the requested {eps:e}")]
    Uncertified { gap: f64, eps: f64 },
    #[error("every model has a -inf relative log-likelihood")]
    AllModelsImpossible,
    #[error("no real model index is set on the instance")]
    MissingStar,
    #[error("reference distribution {index} removes every model row")]
    EmptyGame { index: usize },
    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    #[error("argument `{name}` must be positive, got {value}")]
    NonPositiveArgument { name: &'static str, value: f64 },
    #[error("loss is not a per-step reward sum")]
    NonDecomposableLoss,
    #[error("loss {value} falls outside [0, {bound}]")]
    RangeViolation { value: f64, bound: f64 },
    #[error("value grid is empty")]
    EmptyGrid,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("{check} violated: {detail}")]
    AssertionFailed { check: &'static str, detail: String },
    #[error("serialization: {0}")]
    Serialization(String),
}
