use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("index error: {index} out of range for {len}")]
    Index { index: usize, len: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Failure inside one cell of an experiment matrix.
    #[error("{cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration rather than a
    /// failure while running.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } => true,
            Error::Cell { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub(crate) fn in_cell(self, cell: impl Into<String>) -> Self {
        Error::Cell {
            cell: cell.into(),
            source: Box::new(self),
        }
    }
}
