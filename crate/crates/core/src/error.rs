//! Crate error type.

use thiserror::Error;

/// Errors raised by parsing, validation, and the samplers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("history has length {got}, expected {expected}")]
    HistoryLength { expected: usize, got: usize },

    #[error("invalid event character {0:?}, expected one of 0, L, R, S, B")]
    InvalidEvent(char),

    #[error("all-zero history is not a valid observation")]
    AllZeroHistory,

    #[error("unobservable history {0} cannot appear in observed data")]
    UnobservableInData(String),

    #[error("history {0} is not unobservable, cannot split")]
    NotUnobservable(String),

    #[error("combine requires a left-only and a right-only history, got {left} and {right}")]
    NotParents { left: String, right: String },

    #[error("history count for T={t} exceeds the platform count type")]
    CountOverflow { t: usize },

    #[error("count must be positive, got {0}")]
    NonPositiveCount(u64),

    #[error("empty dataset")]
    EmptyData,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite log posterior at initialization: {0}")]
    NonFiniteInit(String),

    #[error("chains have mismatched lengths: {0} vs {1}")]
    ChainLengthMismatch(usize, usize),

    #[error("parameter {0} missing from chain")]
    MissingParameter(String),

    #[error("zero total variance, cannot combine chains for {0}")]
    ZeroCombinedVariance(String),

    #[error("prior predictive rejection sampler accepted 0 of {attempts} draws")]
    NoAcceptedDraws { attempts: u64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("scenario config: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
