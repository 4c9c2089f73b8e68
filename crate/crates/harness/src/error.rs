use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] esteq::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("{failed} of {reps} replications failed (limit 20%); first failures: {examples}")]
    TooManyFailures { failed: usize, reps: usize, examples: String },

    #[error("need at least {needed} samples, have {have}")]
    TooFewSamples { needed: usize, have: usize },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
