use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("header mismatch for {path}: expected {expected} payload bytes, found {found}")]
    HeaderMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("non-finite voxel at linear index {index}")]
    NonFiniteVoxel { index: usize },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("duplicate study id {0:?}")]
    DuplicateStudyId(String),

    #[error("study {study_id:?}: missing {what} file{}", path.as_ref().map(|p| format!(" ({})", p.display())).unwrap_or_default())]
    MissingSequenceFile {
        study_id: String,
        what: String,
        path: Option<PathBuf>,
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("zero variance: cannot z-score a constant volume")]
    ZeroVariance,

    #[error("patch size {size} larger than volume dims {dims:?}")]
    PatchLargerThanVolume { size: usize, dims: [usize; 3] },

    #[error("sequence {0} not present in study")]
    MissingSequence(String),

    #[error("channel mismatch: model expects {expected} input channels, got {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("odd spatial dimension {0:?} cannot be halved")]
    OddDimension([usize; 3]),

    #[error("input dims {dims:?} not divisible by 2^{depth}")]
    IndivisibleDims { dims: [usize; 3], depth: usize },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty denominator mask: {0} undefined")]
    EmptyDenominator(&'static str),

    #[error("empty mask: surface distance undefined")]
    EmptyMask,

    #[error("too few non-zero pairs for the signed-rank test: {0} (need at least 5)")]
    TooFewPairs(usize),

    #[error("case-set mismatch: {0}")]
    CaseSetMismatch(String),

    #[error("phantom geometry does not fit the grid: {0}")]
    GeometryOverflow(String),

    #[error("dataset too small: {size} studies for {folds} folds")]
    DatasetTooSmall { size: usize, folds: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("missing dependency: {0}")]
    MissingDependency(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown model name {0:?}")]
    UnknownModelName(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingFile(path.into());
        }
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad input or configuration rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFiniteLoss { .. } | Error::DegenerateBatch(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
