use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("non-finite value at row {row}, column {column}")]
    Data { row: usize, column: usize },

    #[error("trace lasts {seconds:.3} s, minimum is {minimum} s")]
    Duration { seconds: f64, minimum: f64 },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("invalid band [{low}, {high}] Hz at {fps} fps")]
    Band { low: f64, high: f64, fps: f64 },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("window of {window} samples does not fit a signal of {len}")]
    Window { window: usize, len: usize },

    #[error("extraction failed: {0}")]
    Extraction(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite gradient in `{0}`")]
    Grad(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at epoch {epoch}")]
    Training { epoch: usize },

    #[error("need both classes, got {positives} positive and {negatives} negative")]
    Class { positives: usize, negatives: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Stable numeric codes shared by the C ABI and by the video-ingest validator.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Ok = 0,
    Format = 1,
    Data = 2,
    Duration = 3,
    DegenerateSignal = 4,
    Band = 5,
    Index = 6,
    Window = 7,
    Extraction = 8,
    Shape = 9,
    Config = 10,
    Grad = 11,
    InsufficientData = 12,
    Training = 13,
    Class = 14,
    Io = 15,
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Format { .. } => ErrorCode::Format,
            Error::Data { .. } => ErrorCode::Data,
            Error::Duration { .. } => ErrorCode::Duration,
            Error::DegenerateSignal(_) => ErrorCode::DegenerateSignal,
            Error::Band { .. } => ErrorCode::Band,
            Error::Index { .. } => ErrorCode::Index,
            Error::Window { .. } => ErrorCode::Window,
            Error::Extraction(_) => ErrorCode::Extraction,
            Error::Shape(_) => ErrorCode::Shape,
            Error::Config(_) => ErrorCode::Config,
            Error::Grad(_) => ErrorCode::Grad,
            Error::InsufficientData(_) => ErrorCode::InsufficientData,
            Error::Training { .. } => ErrorCode::Training,
            Error::Class { .. } => ErrorCode::Class,
            Error::Io { .. } => ErrorCode::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}
