//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, likelihood evaluation, data
/// handling, and the samplers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid probability structure: {0}")]
    NonStochastic(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(
        "enumeration over {terms} latent sequences exceeds the cap of {cap}; \
         use the forward filter for histories of this size"
    )]
    EnumerationCap { terms: u128, cap: u128 },

    #[error("capture history contains no sighting")]
    NoSighting,

    #[error("parameter out of range: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "latent-state sampling requires the full dataset: every observation \
         history needs its own latent sequence, so a reduced representation \
         cannot be used"
    )]
    LatentNeedsFullData,

    #[error("initial posterior is not finite: {0}")]
    NonFiniteInitial(String),

    #[error("latent full conditional at history {history}, occasion {occasion} has all-zero weights")]
    DegenerateConditional { history: usize, occasion: usize },

    #[error("chain too short: {0}")]
    ChainTooShort(String),

    #[error("chain contains non-finite values")]
    NonFiniteChain,

    #[error("simulation rejected {attempts} draws without producing a sighting history")]
    DegenerateSimulation { attempts: usize },

    #[error("model config error: {0}")]
    Config(String),

    #[error("reports are not comparable: {0}")]
    IncompatibleReports(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
