use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: {reason}")]
    InvalidShape { op: &'static str, reason: String },

    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("backward called without a forward cache for layer {layer}")]
    MissingCache { layer: usize },

    #[error("non-finite value {value} at {location}")]
    NonFinite { location: String, value: f64 },

    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("polygon does not intersect the {width}x{height} image")]
    EmptyIntersection { width: usize, height: usize },

    #[error("checkpoint: bad magic bytes")]
    CheckpointMagic,

    #[error("checkpoint: unsupported format version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint: truncated {what}: needed {needed} bytes, {available} available")]
    CheckpointTruncated {
        what: String,
        needed: usize,
        available: usize,
    },

    #[error("checkpoint: {0} trailing bytes after the last parameter blob")]
    CheckpointTrailing(usize),

    #[error("checkpoint: parameter {name} shape {found:?} does not match model {expected:?}")]
    CheckpointShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("checkpoint header: {0}")]
    CheckpointHeader(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: cannot encode image: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_layer(self, layer: usize) -> Self {
        match self {
            e @ (Error::Layer { .. } | Error::MissingCache { .. }) => e,
            e => Error::Layer {
                layer,
                source: Box::new(e),
            },
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } | Error::InvalidShape { .. } => "shape",
            Error::InvalidArgument { .. } => "argument",
            Error::Layer { .. } => "layer",
            Error::MissingCache { .. } => "missing_cache",
            Error::NonFinite { .. } | Error::NonFiniteLoss { .. } => "non_finite",
            Error::DegeneratePolygon(_) | Error::EmptyIntersection { .. } => "geometry",
            Error::CheckpointMagic
            | Error::CheckpointVersion { .. }
            | Error::CheckpointTruncated { .. }
            | Error::CheckpointTrailing(_)
            | Error::CheckpointShape { .. }
            | Error::CheckpointHeader(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Decode { .. } | Error::Encode { .. } => "image",
            Error::Parse { .. } => "parse",
            Error::Empty(_) => "empty",
            Error::Json(_) => "json",
        }
    }
}
