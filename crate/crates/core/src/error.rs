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

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed template at line {line}: {message}")]
    TemplateFormat { line: usize, message: String },

    #[error("matcher configuration mismatch between descriptors")]
    ConfigMismatch,

    #[error("score sets cover different pairs: {0}")]
    PairSetMismatch(String),

    #[error("duplicate identifier in manifest: {0}")]
    DuplicateId(String),

    #[error("cannot parse file name {0:?} with the configured pattern")]
    UnparseableName(String),

    #[error("FAR target {target} is below the measurable floor 1/{imposters}")]
    Unmeasurable { target: f64, imposters: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed score file at line {line}: {message}")]
    ScoreFormat { line: usize, message: String },

    #[error("provenance violation: {0}")]
    Provenance(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than by a bug or an
    /// unusable environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Json(_))
    }
}
