use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter fell outside its documented domain.
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// Sampling rate too low for the requested dither or filter corners.
    #[error("sampling precondition violated: {0}")]
    Sampling(String),

    /// Input series problems (empty, too short, non-finite).
    #[error("invalid input: {0}")]
    Input(String),

    /// Operation not defined for the configured source mode.
    #[error("unsupported mode: {0}")]
    Mode(String),

    /// Stability is undefined when the quadrature variances are equal.
    #[error("no quadrature asymmetry: the noise-locking error signal vanishes")]
    NoAsymmetry,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
