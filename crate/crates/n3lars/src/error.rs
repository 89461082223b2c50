use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Parse failure with 1-based row/column location.
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("feature {index} is constant; correlation is undefined")]
    ConstantFeature { index: usize },

    /// A pairwise score the solver relies on was never computed. Signals a
    /// cache or scheduling bug rather than bad input.
    #[error("missing pairwise score for features ({0}, {1})")]
    MissingScore(usize, usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

impl Error {
    pub fn parse(row: usize, col: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            col,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
