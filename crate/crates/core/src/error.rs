use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}{}: {message}", column.as_ref().map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("sample size too small: T = {t} but at least p + 2 = {} rows are needed", p + 2)]
    SampleSize { t: usize, p: usize },

    #[error("non-positive residual degrees of freedom: T - 1 - k = {t} - 1 - {k}")]
    DegreesOfFreedom { t: usize, k: usize },

    #[error("selected design is rank deficient (columns {columns:?})")]
    Singular { columns: Vec<String> },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("draw pairing error: {0}")]
    Pairing(String),

    #[error("degenerate portfolio: {0}")]
    DegeneratePortfolio(String),

    #[error("unknown ticker {0}")]
    Lookup(String),

    #[error("singular solution path: {0}")]
    SingularPath(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration and validation problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular { .. }
            | Error::NotPositiveDefinite(_)
            | Error::DegeneratePortfolio(_)
            | Error::SingularPath(_)
            | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
