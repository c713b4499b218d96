use thiserror::Error;

/// Errors produced by the reconstruction engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Missing or contradictory command-line arguments.
    #[error("usage: {0}")]
    Usage(String),

    /// Input data violates a precondition (shape mismatch, non-finite
    /// entries, empty stacks, inconsistent files).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A numerical procedure failed (non-finite loss or gradients,
    /// SVD non-convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File format violation in one of the on-disk formats.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(format!("csv: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for usage problems, 3 for
    /// validation problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Numerical(_) => 4,
            _ => 3,
        }
    }
}
