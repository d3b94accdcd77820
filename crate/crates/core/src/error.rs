use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate spec: {0}")]
    DegenerateSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("need at least 2 prototypes, got {0}")]
    TooFewPrototypes(usize),

    #[error("degenerate boundary: R_max must be positive")]
    DegenerateBoundary,

    #[error("non-finite value in {component}")]
    NonFinite { component: String },

    #[error("config hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn non_finite(component: impl Into<String>) -> Self {
        Error::NonFinite {
            component: component.into(),
        }
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
