use thiserror::Error;

/// Errors produced by the cslds library.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible shapes between operands (vectors, matrices, plans).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Invalid parameter combination or malformed run configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Underlying filesystem error.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file exists but its contents do not parse as the expected format.
    #[error("malformed file: {0}")]
    Format(String),

    /// A numerical routine could not produce a meaningful result.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code for the CLI: 1 config, 2 i/o, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io(_) | Error::Format(_) => 2,
            Error::DimensionMismatch(_) | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
