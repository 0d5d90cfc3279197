use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed or invalid row in an input file.
    #[error("{source_name}, line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("calendar age {theta} lies outside the curve support [{lo}, {hi}]")]
    OutOfRange { theta: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    EmptyInput(String),

    #[error("density grid is not normalised (mass {mass})")]
    Unnormalized { mass: f64 },

    #[error("{0}; supply hyperparameters manually")]
    DegenerateSpread(String),

    #[error("slice sampler started at a point with log density {0}")]
    InvalidStart(f64),

    /// Broken sampler state; always a bug.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("malformed sample file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_owned(),
            line,
            message: message.into(),
        }
    }
}
