use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-positive output extent: {0}")]
    NonPositiveOutput(String),
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("backward pass called without a matching forward cache")]
    MissingForwardCache,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("unsupported format variant: {0}")]
    UnsupportedVariant(String),
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error("wavelength {0} nm is outside the visible range [380, 750]")]
    WavelengthOutOfRange(f64),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty dataset")]
    EmptyDataset,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("ROC needs both positive and negative samples")]
    SingleClassInput,

    #[error("trace has no samples")]
    EmptyTrace,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("baseline energy must be positive")]
    ZeroBaseline,

    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint payload CRC mismatch")]
    CrcMismatch,
    #[error("checkpoint is truncated")]
    TruncatedFile,

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
