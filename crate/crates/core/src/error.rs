use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Raw exponentials overflowed (or underflowed to a zero row sum).
    #[error("numeric overflow in {mode} mode{}: {detail}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    NumericOverflow {
        mode: &'static str,
        row: Option<usize>,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a row index to an overflow error raised by a row-level kernel.
    pub fn at_row(self, row: usize) -> Self {
        match self {
            Error::NumericOverflow { mode, detail, .. } => Error::NumericOverflow {
                mode,
                row: Some(row),
                detail,
            },
            other => other,
        }
    }
}
