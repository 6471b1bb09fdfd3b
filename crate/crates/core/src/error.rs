use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("task `{0}` already present")]
    DuplicateTask(String),

    #[error("label `{label}` is not a valid {scheme} label")]
    InvalidLabel { label: String, scheme: &'static str },

    #[error("label `{label}` not in inventory of task `{task}`")]
    LabelNotInInventory { task: String, label: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("kurtosis undefined: {0}")]
    UndefinedKurtosis(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed parameter file: {0}")]
    ParamFile(String),
}

impl Error {
    /// Stable short name of the variant, for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Empty(_) => "empty",
            Error::UnknownTask(_) => "unknown-task",
            Error::DuplicateTask(_) => "duplicate-task",
            Error::InvalidLabel { .. } => "invalid-label",
            Error::LabelNotInInventory { .. } => "label-not-in-inventory",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::NonScalarLoss(_) => "non-scalar-loss",
            Error::UndefinedKurtosis(_) => "undefined-kurtosis",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::Config(_) => "config",
            Error::ParamFile(_) => "param-file",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
