use std::path::PathBuf;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("numeric error in `{name}`: {message}")]
    Numeric { name: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("budget error: {0}")]
    Budget(String),

    #[error("timed out waiting for labels: {0}")]
    Timeout(String),

    #[error("version error: {0}")]
    Version(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Argument(_) => "argument",
            Error::Spec(_) => "spec",
            Error::Shape(_) => "shape",
            Error::Contract(_) => "contract",
            Error::Numeric { .. } => "numeric",
            Error::Config(_) => "config",
            Error::Budget(_) => "budget",
            Error::Timeout(_) => "timeout",
            Error::Version(_) => "version",
            Error::Io { .. } => "io",
            Error::Json(_) => "parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
