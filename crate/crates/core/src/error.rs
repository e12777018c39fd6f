use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported or malformed audio in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("alignment error in {utterance}: {reason}")]
    Alignment { utterance: String, reason: String },

    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown utterance id '{0}'")]
    Reference(String),

    #[error("input too short: {have} {unit} available, need at least {need}")]
    TooShort {
        have: usize,
        need: usize,
        unit: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("segment {start}..{end} of {utterance} covers no frame at {rate_ms} ms")]
    EmptySegment {
        utterance: String,
        start: usize,
        end: usize,
        rate_ms: f64,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training aborted at epoch {epoch}, batch {batch} (lr {lr:e}): {reason}")]
    Training {
        epoch: usize,
        batch: usize,
        lr: f64,
        reason: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Load { .. } => "load",
            Error::Io(_) => "io",
            Error::Format { .. } => "format",
            Error::Alignment { .. } => "alignment",
            Error::Parse { .. } => "parse",
            Error::Reference(_) => "reference",
            Error::TooShort { .. } => "too_short",
            Error::Shape(_) => "shape",
            Error::Index { .. } => "index",
            Error::Numeric(_) => "numeric",
            Error::Config(_) => "config",
            Error::UnsupportedMode(_) => "unsupported_mode",
            Error::Degenerate(_) => "degenerate",
            Error::Metric(_) => "metric",
            Error::Analysis(_) => "analysis",
            Error::EmptySegment { .. } => "empty_segment",
            Error::Checkpoint(_) => "checkpoint",
            Error::Training { .. } => "training",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
