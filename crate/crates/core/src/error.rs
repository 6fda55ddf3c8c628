use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimensions {height}x{width} are below the {min}x{min} minimum")]
    DimensionTooSmall { height: usize, width: usize, min: usize },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch { expected: (usize, usize), actual: (usize, usize) },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("gain {0} is not strictly positive")]
    NonPositiveGain(f64),
    #[error("pixel value {0} outside [0, 1]")]
    ValueOutOfRange(f64),
    #[error("buffer length {actual} does not match {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("action index {0} outside [0, 30]")]
    ActionOutOfRange(usize),
    #[error("environment episode already finished")]
    EpisodeDone,
    #[error("empty trace")]
    EmptyTrace,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("reference image is degenerate (zfc {0:e} below 1e-6)")]
    DegenerateReference(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown scorer {0:?}")]
    UnknownScorer(String),
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image data: {0}")]
    CorruptImage(String),
    #[error("checkpoint has bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
