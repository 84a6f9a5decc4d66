use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tag string or record field could not be interpreted.
    #[error("format error: {0}")]
    Format(String),

    /// Bracketed tree text is malformed; `offset` is a byte offset into the text.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A corpus file line failed validation.
    #[error("line {line}, field `{field}`: {message}")]
    Record {
        line: usize,
        field: &'static str,
        message: String,
    },

    /// A structural invariant was violated (overlapping spans, bad layouts).
    #[error("invalid value: {0}")]
    Invalid(String),

    /// A caller passed arguments that do not fit together.
    #[error("argument error: {0}")]
    Argument(String),

    /// The exhaustive search space is larger than the allowed bound.
    #[error("search space of {size} sequences exceeds the bound of {bound}")]
    Size { size: f64, bound: f64 },

    /// A caller broke a usage contract (for example gold tags in an unlabeled pool).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A constraint family that is declared but not implemented.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
