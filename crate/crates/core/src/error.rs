use thiserror::Error;

/// Errors raised by the estimating-equation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("non-finite entry in {0}")]
    NonFiniteMatrix(&'static str),

    #[error("empty dataset")]
    EmptyData,

    #[error("need at least {needed} observations, have {have}")]
    TooFewObservations { needed: usize, have: usize },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("empty sample for label {0}")]
    EmptySample(usize),

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("operation not supported for {kind} penalty: {reason}")]
    UnsupportedPenalty { kind: &'static str, reason: &'static str },

    #[error("cyclic or forward dependency: stage {stage} depends on stage {on}")]
    CyclicDependency { stage: usize, on: usize },

    #[error("invalid stacking: {0}")]
    InvalidStack(String),

    #[error("singular matrix in {context} (condition number {condition:.3e})")]
    Singular { context: &'static str, condition: f64 },

    #[error("{capability} not supplied by the model")]
    NotSupplied { capability: &'static str },

    #[error("solver diverged after {iterations} iterations")]
    Diverged { iterations: usize },

    #[error("solver hit the iteration cap ({0})")]
    MaxIterations(usize),

    #[error("stage {stage} failed: {source}")]
    StageFailed {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("zero penalty weight on off-support coordinate {0}")]
    ZeroLambda(usize),

    #[error("incoherence violated: alpha = {0} >= 1")]
    IncoherenceViolated(f64),

    #[error("propensity clipped on {fraction:.4} of rows (limit {limit})")]
    PropensityClipping { fraction: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
