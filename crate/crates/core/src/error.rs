use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is not a power of two")]
    NonPowerOfTwo { name: &'static str, value: usize },
    #[error("{dim} = {value} is not divisible by the user count {users}")]
    IndivisibleUsers {
        dim: &'static str,
        value: usize,
        users: usize,
    },
    #[error("delay/Doppler range out of bounds: {0}")]
    DelayDopplerOutOfRange(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported constellation: {0}")]
    UnsupportedOrder(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("error space is empty")]
    EmptyErrorSpace,
    #[error("bit vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("codebook of 2^{bits} entries exceeds the limit of 2^{limit}")]
    CodebookTooLarge { bits: usize, limit: usize },
    #[error("search space of {size} candidates exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: f64, limit: usize },
    #[error("DAP index {index} is invalid: {reason}")]
    InvalidDapIndex { index: usize, reason: String },
    #[error("{paths} distinct paths requested but only {grid} delay-Doppler shifts exist")]
    TooManyPaths { paths: usize, grid: usize },
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NonHermitianInput(f64),
    #[error("baseline is incompatible with the base configuration: {0}")]
    IncompatibleBase(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable variant name for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPowerOfTwo { .. } => "NonPowerOfTwo",
            Error::IndivisibleUsers { .. } => "IndivisibleUsers",
            Error::DelayDopplerOutOfRange(_) => "DelayDopplerOutOfRange",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::UnsupportedOrder(_) => "UnsupportedOrder",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::EmptyErrorSpace => "EmptyErrorSpace",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::CodebookTooLarge { .. } => "CodebookTooLarge",
            Error::SearchSpaceTooLarge { .. } => "SearchSpaceTooLarge",
            Error::InvalidDapIndex { .. } => "InvalidDapIndex",
            Error::TooManyPaths { .. } => "TooManyPaths",
            Error::SolveFailure(_) => "SolveFailure",
            Error::NonHermitianInput(_) => "NonHermitianInput",
            Error::IncompatibleBase(_) => "IncompatibleBase",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
