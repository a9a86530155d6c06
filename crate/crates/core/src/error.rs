use thiserror::Error;

use crate::manifold::SpdMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Option<Box<SpdMatrix>>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{module} failed for subject {subject}: {source}")]
    Subject {
        module: &'static str,
        subject: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => ErrorKind::Config,
            Error::Parse { .. } | Error::Io { .. } | Error::Shape(_) | Error::Degenerate(_) => {
                ErrorKind::Data
            }
            Error::NonFinite { .. } | Error::NotSpd(_) | Error::NoConvergence { .. } => {
                ErrorKind::Numeric
            }
            Error::Subject { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn in_subject(self, module: &'static str, subject: &str) -> Self {
        Error::Subject {
            module,
            subject: subject.to_string(),
            source: Box::new(self),
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
