use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: division by zero")]
    DivisionByZero { op: &'static str },

    #[error("{op}: {reason}")]
    InvalidShape { op: &'static str, reason: String },

    #[error("{op}: empty reduction")]
    EmptyReduction { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid soft labels: {0}")]
    InvalidLabels(String),

    #[error("unknown tap point `{name}` (available: {available:?})")]
    UnknownTap { name: String, available: Vec<String> },

    #[error("more than one label-replacing hook in a single forward pass")]
    MultipleLabelHooks,

    #[error("model input needs at least {minimum} timesteps, got {got}")]
    InputTooShort { minimum: usize, got: usize },

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("checksum mismatch for {file}: manifest {expected:08x}, payload {actual:08x}")]
    ChecksumMismatch {
        file: String,
        expected: u32,
        actual: u32,
    },

    #[error("{file}: payload does not match manifest ({reason})")]
    PayloadShape { file: String, reason: String },

    #[error("subject `{subject}`: unknown label value {value}")]
    UnknownLabel { subject: String, value: u8 },

    #[error("duplicate subject id `{0}`")]
    DuplicateSubject(String),

    #[error("unknown subject `{0}`")]
    UnknownSubject(String),

    #[error("invalid bundle: {0}")]
    InvalidBundle(String),

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("AUROC needs both classes present")]
    SingleClass,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_)
            | Error::UnknownTap { .. }
            | Error::MultipleLabelHooks
            | Error::InputTooShort { .. }
            | Error::UnknownSubject(_) => ErrorClass::Usage,
            Error::NonFiniteGradient { .. } | Error::NonFinite(_) | Error::DivisionByZero { .. } => {
                ErrorClass::Numeric
            }
            Error::ShapeMismatch { .. }
            | Error::InvalidShape { .. }
            | Error::EmptyReduction { .. }
            | Error::NonScalarLoss(_)
            | Error::InvalidLabels(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
