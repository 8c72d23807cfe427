use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no rest baseline: rest mask selects no samples")]
    NoRestBaseline,
    #[error("channel unusable: {0}")]
    ChannelUnusable(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("missing repetitions: {0}")]
    MissingRepetitions(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("sequence too short for CNN: {len} steps, need at least {need}")]
    SequenceTooShort { len: usize, need: usize },
    /// An internal consistency check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("missing artifact: {0}")]
    Missing(String),
    #[error(transparent)]
    Nn(#[from] myosynth_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
