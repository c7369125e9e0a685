//! Crate-wide error type.

use std::fmt;

/// Errors raised by the library.
#[derive(Debug)]
pub enum Error {
    /// A tensor or layer received data of the wrong shape.
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },
    /// A documented precondition was violated (ordering, value range, ...).
    Contract(String),
    /// Invalid configuration (bad rates, missing fields, unknown kinds, ...).
    Config(String),
    /// A numerical failure: NaN/Inf where finite values are required,
    /// divergence, or a non-finite objective.
    Numerical(String),
    /// Correlation is undefined because one input has zero variance.
    DegenerateSample,
    /// File I/O failure, with the offending path when known.
    Io {
        path: String,
        source: std::io::Error,
    },
    /// Malformed JSON header, config, or manifest.
    Json(serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(context: &'static str, expected: impl fmt::Debug, got: impl fmt::Debug) -> Self {
        Error::Shape {
            context,
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                context,
                expected,
                got,
            } => write!(f, "shape mismatch in {context}: expected {expected}, got {got}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::DegenerateSample => {
                write!(f, "degenerate sample: zero-variance input to correlation")
            }
            Error::Io { path, source } => write!(f, "i/o error on {path}: {source}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
