use std::path::PathBuf;

/// Errors surfaced by the training engine.
///
/// Variants map onto CLI exit codes via [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed tensor shapes (ragged rows, dimension mismatch).
    #[error("structural error: {0}")]
    Structural(String),

    /// Caller passed arguments outside an operation's domain.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data is inconsistent (missing positive, empty pool, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A similarity ratio was requested against a non-positive positive score.
    #[error("degenerate positive score {0}: difficulty ratio undefined")]
    DegeneratePositive(f64),

    /// A loss component was NaN or infinite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Text output from a generator or controller did not follow the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A line of a JSON Lines / text file failed to parse.
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Transport-level failure talking to a remote endpoint.
    #[error("transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Process exit code for this error: 1 for usage problems, 2 for data or parse problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Structural(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
