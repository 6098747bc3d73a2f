use thiserror::Error;

/// Errors from the image and mask data model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("image must be at least 1x1")]
    EmptyImage,
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("crop rectangle {rect:?} outside {width}x{height} image")]
    CropOutOfBounds {
        rect: (u32, u32, u32, u32),
        width: u32,
        height: u32,
    },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (u32, u32), right: (u32, u32) },
    #[error("malformed mask runs: {0}")]
    MalformedRuns(String),
    #[error("image codec error: {0}")]
    Codec(String),
}
