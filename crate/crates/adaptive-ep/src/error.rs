use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/vector dimensions do not line up.
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// An argument was outside its valid domain.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A configuration is internally inconsistent or infeasible.
    #[error("invalid config: {0}")]
    Config(String),

    /// Training diverged or received non-finite values.
    #[error("training error: {0}")]
    Train(String),

    /// A forward tape was reused against the wrong network or input.
    #[error("tape contract violated: {0}")]
    Tape(String),

    /// A corpus file is malformed or inconsistent.
    #[error("corpus error: {0}")]
    Corpus(String),

    /// Not enough data to compute the requested statistic.
    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-parsable category name, used by the CLI for exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Train(_) => "train",
            Error::Tape(_) => "tape",
            Error::Corpus(_) => "corpus",
            Error::InsufficientSample(_) => "insufficient-sample",
            Error::Io(_) => "io",
            Error::Json(_) => "serialization",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
