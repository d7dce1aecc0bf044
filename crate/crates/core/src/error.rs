use thiserror::Error;

/// Library-wide error type. Variants distinguish bad inputs (config or data
/// validation) from IO and from failures that only surface mid-computation,
/// because the CLI maps the first group to exit code 2 and the rest to 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("runtime error: {0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Error::Runtime(msg.into())
    }

    /// True for errors caused by bad user input (files, flags, config values)
    /// rather than by a failure while computing.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Parse(_) | Error::Io(_))
    }

    /// Prefixes the message with the pipeline stage that raised it, keeping
    /// the variant (and with it the exit-code class).
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{stage} stage: {m}")),
            Error::Parse(m) => Error::Parse(format!("{stage} stage: {m}")),
            Error::Io(e) => Error::Runtime(format!("{stage} stage: io error: {e}")),
            Error::Runtime(m) => Error::Runtime(format!("{stage} stage: {m}")),
        }
    }
}
