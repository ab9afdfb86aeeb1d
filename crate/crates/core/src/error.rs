use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad error category, used by the command line to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorFamily {
    Io,
    Format,
    Input,
    Config,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("probability {0} outside [0, 1]")]
    InputDomain(f64),
    #[error("gate id {0} is not in 0..16")]
    InvalidGate(u64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("class {class} out of range for {class_count} classes")]
    ClassOutOfRange { class: usize, class_count: usize },
    #[error("node {node} out of range for layer {layer} of width {width}")]
    NodeOutOfRange {
        layer: usize,
        node: usize,
        width: usize,
    },
    #[error("network is in {actual} mode, {expected} mode required")]
    WrongMode {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error("unsupported model format version {0}")]
    SchemaVersion(u32),
    #[error("layer {layer} node {node}: input index {index} dangles (previous width {width})")]
    DanglingIndex {
        layer: usize,
        node: usize,
        index: usize,
        width: usize,
    },
    #[error("idx file {path}: {message}")]
    Idx { path: PathBuf, message: String },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("empty selection: {0}")]
    Empty(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("invalid theta range [{min}; {step}; {max}]")]
    ThetaRange { min: f64, step: f64, max: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Io { .. } => ErrorFamily::Io,
            Error::ModelFormat { .. }
            | Error::SchemaVersion(_)
            | Error::DanglingIndex { .. }
            | Error::Idx { .. }
            | Error::CountMismatch { .. }
            | Error::InvalidGate(_) => ErrorFamily::Format,
            Error::InputDomain(_)
            | Error::DimensionMismatch { .. }
            | Error::ClassOutOfRange { .. }
            | Error::NodeOutOfRange { .. }
            | Error::WrongMode { .. }
            | Error::Empty(_) => ErrorFamily::Input,
            Error::Config(_) | Error::ThetaRange { .. } => ErrorFamily::Config,
            Error::NonFiniteLoss { .. } | Error::ZeroVector => ErrorFamily::Numeric,
        }
    }
}
