use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("degenerate ROI: {0}")]
    DegenerateRoi(String),
    #[error("grid {grid} is finer than the image ({width}x{height})")]
    GridTooFine {
        grid: usize,
        width: usize,
        height: usize,
    },
    #[error("unknown augmentation condition `{0}`")]
    UnknownCondition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("activation tape is stale or incomplete: {0}")]
    StaleTape(String),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("network has no spatial layer before flatten")]
    NoSpatialLayer,
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("class {0} has no positives or no negatives")]
    DegenerateClass(usize),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest line {line}: KL grade `{value}` outside 0..=4")]
    BadGrade { line: usize, value: String },
    #[error("manifest line {line}: duplicate knee {patient_id}/{side}")]
    DuplicateKnee {
        line: usize,
        patient_id: String,
        side: String,
    },
    #[error("too few patients: {0}")]
    TooFewPatients(String),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_step(self, step: &'static str) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (as opposed to runtime failures).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Checkpoint(_) => false,
            Error::Step { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
