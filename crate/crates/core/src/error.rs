use thiserror::Error;

/// Errors raised by the accounting, optimization and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument or configuration field is out of its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The inputs are well formed but fall outside the regime where the
    /// requested quantity is defined.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Noise calibration could not reach the requested target.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A configuration file or experiment setup is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_) | Error::Precondition(_) | Error::Config(_)
        )
    }

    /// Process exit status: 2 for validation failures, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            2
        } else {
            1
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
