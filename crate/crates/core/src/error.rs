//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad file format in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("insufficient distinct points: need at least {needed}, found {found}")]
    InsufficientDistinctPoints { needed: usize, found: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unit id {unit} out of range for codebook of size {k}")]
    UnitOutOfRange { unit: u32, k: usize },

    #[error("unknown language {0}")]
    UnknownLanguage(String),

    #[error("invalid language spec: {0}")]
    InvalidLanguageSpec(String),

    #[error("token {token} is not a valid {lang}-language sentence token")]
    NotInSourceLanguage { token: u32, lang: String },

    #[error("pair {utt_id} exceeds token budget {budget} (needs {needed})")]
    BudgetExceeded {
        utt_id: String,
        budget: usize,
        needed: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("token id {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },

    #[error("sequence length {len} exceeds maximum positions {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at step {step}; last good state saved to {checkpoint}")]
    Diverged { step: u64, checkpoint: String },

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("shape mismatch for tensor {name}: checkpoint has {found:?}, config wants {expected:?}")]
    ShapeMismatch {
        name: String,
        found: (usize, usize),
        expected: (usize, usize),
    },

    #[error("unknown symbol {symbol:?} for language {lang}")]
    UnknownSymbol { symbol: String, lang: String },

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
