use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("path {index} arrives at {delay:.6} s, beyond the {limit:.6} s impulse response")]
    PathBeyondLength { index: usize, delay: f64, limit: f64 },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRate(u32, u32),

    #[error("signal too short: need {needed} samples, have {available}")]
    TooShort { needed: usize, available: usize },

    #[error("silent input: {0}")]
    Silent(&'static str),

    #[error("insufficient decay: energy decay curve only reaches {reached_db:.1} dB")]
    InsufficientDecay { reached_db: f64 },

    #[error("ambiguous prediction: mean output norm {0:e} below threshold")]
    Ambiguous(f64),

    #[error("non-finite gradient in layer {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("eigendecomposition failed at bin {0}")]
    Decomposition(usize),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("mismatched test sets: {0}")]
    MismatchedTestSets(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}
