use std::path::PathBuf;

use thiserror::Error;

use crate::backends::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate look-at direction: {0}")]
    DegenerateDirection(&'static str),

    #[error("invalid clip range: near={near}, far={far}")]
    InvalidClipRange { near: f64, far: f64 },

    #[error("dimension mismatch in {context}: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("failed to parse {path}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("missing images: {}", .0.join(", "))]
    MissingImages(Vec<String>),

    #[error("frame `{file_path}` has a non-orthonormal rotation (drift {drift:.3e}, det {det:.6})")]
    NonOrthonormalRotation { file_path: String, drift: f64, det: f64 },

    #[error("frame `{0}` carries per-frame intrinsics; only shared intrinsics are supported")]
    PerFrameIntrinsics(String),

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error for {context}: {message}")]
    Image { context: String, message: String },

    #[error("index {index} out of range for {len} frames")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("expected {expected} tiles, got {actual}")]
    TileCountMismatch { expected: usize, actual: usize },

    #[error("invalid grid layout: {0}")]
    InvalidGrid(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate primitive: {0}")]
    DegeneratePrimitive(String),

    #[error("dataset has no frames")]
    EmptyDataset,

    #[error("invalid object spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(context: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Error::Image {
            context: context.into(),
            message: err.to_string(),
        }
    }
}
