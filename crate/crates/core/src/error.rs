use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("timestep {t} out of range [{min}, {max}]")]
    TimestepOutOfRange { t: usize, min: usize, max: usize },

    #[error("missing calibration: {0}")]
    MissingCalibration(&'static str),

    #[error("degenerate calibration: lambda_bar is zero at t = {0}")]
    ZeroLambda(usize),

    #[error("incompatible mode and codec: {0}")]
    IncompatibleCodec(String),

    #[error("covariance is not positive definite (component {0})")]
    NotPositiveDefinite(usize),

    #[error("i/o error: {0}")]
    Io(String),

    #[error(transparent)]
    Stream(#[from] StreamError),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Failures while parsing a compressed stream. Each corruption class has its
/// own variant so callers can tell truncation from tampering.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("unsupported stream version {found} (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("stream truncated: needed {needed} bits, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("invalid header field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },

    #[error("{0} unexpected trailing bytes")]
    TrailingData(usize),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}
