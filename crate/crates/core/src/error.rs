use std::io;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("contracted modes differ in size: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("SVD did not converge within {sweeps} sweeps (off-diagonal mass {residual:e})")]
    NumericalFailure { sweeps: usize, residual: f64 },

    #[error("invalid compression spec: {0}")]
    InvalidSpec(String),

    #[error("no factorization of {d} into {order} factors >= 2 exists")]
    InfeasibleOrder { d: usize, order: usize },

    #[error("rank {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("token {0} out of range")]
    TokenOutOfRange(usize),

    #[error("token {0} not found")]
    TokenNotFound(u64),

    #[error("token {0} already present")]
    DuplicateToken(u64),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("empty log-probability sequence")]
    EmptySequence,

    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid log-probability at position {index}: {value}")]
    InvalidLogProb { index: usize, value: f64 },

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("invalid energy config: {0}")]
    InvalidEnergyConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse error class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Numeric,
    Format,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Io => 2,
            ErrorClass::Numeric => 3,
            ErrorClass::Format => 4,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) => ErrorClass::Io,
            Error::CorruptFile(_) | Error::VersionMismatch { .. } => ErrorClass::Format,
            Error::Parse(_)
            | Error::InvalidEnergyConfig(_)
            | Error::InvalidShape(_)
            | Error::InvalidSpec(_)
            | Error::InfeasibleOrder { .. } => ErrorClass::Usage,
            _ => ErrorClass::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
