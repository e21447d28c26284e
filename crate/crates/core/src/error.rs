use thiserror::Error;

/// Errors produced by the simulation, quadrature and diagnostic routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value from {what} at step {step:?}")]
    NonFiniteEvaluation { what: String, step: Option<u64> },

    #[error("sampling grid is empty")]
    EmptyGrid,

    #[error("unknown model id `{0}`")]
    UnknownModelId(String),

    #[error("unknown test function id `{0}`")]
    UnknownTestFunction(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation requires a one-dimensional model (d = {0})")]
    NotOneDimensional(usize),

    #[error("truncation bound X = {bound} too small: boundary mass ratio {ratio:e}")]
    TruncationInsufficient { bound: f64, ratio: f64 },

    #[error("density fell below the floor {floor:e} at x = {x}")]
    DensityUnderflow { x: f64, floor: f64 },

    #[error("Stein residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("normalization is zero: {0} vanished, W/S undefined")]
    ZeroNormalization(&'static str),

    #[error("chain left the Stein grid on {clamped} of {steps} steps")]
    StateOutsideGrid { clamped: u64, steps: u64 },

    #[error("need at least {needed} distinct step sizes in (0, 1) with enough spread, got {got}")]
    InsufficientEtaGrid { needed: usize, got: usize },

    #[error("replica set is empty")]
    EmptyReplicaSet,

    #[error("all {0} replicas failed")]
    AllReplicasFailed(usize),

    #[error("need at least {needed} finite samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("x = {x} beyond Monte Carlo resolution: expected {expected:.1} exceedances, need {needed}")]
    InsufficientResolution { x: f64, expected: f64, needed: f64 },

    #[error("model constants missing or degenerate: {0}")]
    ConstantsMissing(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn non_finite(what: impl Into<String>) -> Error {
    Error::NonFiniteEvaluation {
        what: what.into(),
        step: None,
    }
}
