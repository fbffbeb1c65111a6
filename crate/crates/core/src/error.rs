use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report, across all stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or malformed image: {0}")]
    Format(String),
    #[error("degenerate image: all pixels equal")]
    DegenerateImage,
    #[error("cannot place {placed_needed} items on a {width}x{height} page with gap {gap}")]
    Placement {
        placed_needed: usize,
        width: usize,
        height: usize,
        gap: usize,
    },
    #[error("box {x},{y},{w}x{h} outside image {width}x{height}")]
    BoxOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("model has no training points")]
    EmptyModel,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch norm needs at least 2 samples in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonfiniteLoss { epoch: usize, batch: usize },
    #[error("dataset contains unlabeled entries")]
    UnlabeledData,
    #[error("model features do not match: {0}")]
    ModelFeatureMismatch(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid model file: {0}")]
    ModelFormat(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("port {0} already in use")]
    PortInUse(u16),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
