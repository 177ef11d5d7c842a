use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A deformation or evaluation would leave `[0, T]`.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The functional does not provide what the operation needs
    /// (analytic derivatives, convexity, a supported derivative order).
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("local-time convention mismatch: {0}")]
    Convention(String),

    #[error("malformed path file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Argument(_) => "argument",
            Error::Unsupported(_) => "unsupported",
            Error::Convention(_) => "convention",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
