use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid pattern spec: {0}")]
    InvalidPattern(String),

    #[error("invalid filter parameters: {0}")]
    InvalidFilter(String),

    #[error("image {width}x{height} is smaller than the {kernel}x{kernel} kernel")]
    ImageTooSmall {
        width: usize,
        height: usize,
        kernel: usize,
    },

    #[error("{what} index {index} out of range 0..={max}")]
    OutOfRange {
        what: &'static str,
        index: u32,
        max: u32,
    },

    #[error("malformed code: {0}")]
    MalformedCode(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("no box for question {question} alternative {alternative}")]
    UnknownBox { question: u8, alternative: u8 },

    #[error("orientation: {0}")]
    Orientation(String),

    #[error("alignment failure: {0}")]
    Alignment(String),

    #[error("alignment failure: corner fit residual {residual:.3} px exceeds {limit} px")]
    Residual { residual: f64, limit: f64 },

    #[error("answer key for quiz {key} does not match decoded quiz {decoded}")]
    KeyMismatch { key: u32, decoded: u32 },

    #[error("no answer key for quiz {0}")]
    MissingKey(u32),

    #[error("invalid roster: {0}")]
    Roster(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("transport: {0}")]
    Transport(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable reason used on the review list.
    pub fn reason_code(&self) -> &'static str {
        match self {
            Error::Alignment(_) | Error::Residual { .. } => "alignment failure",
            Error::Orientation(_) => "orientation failure",
            Error::MalformedCode(_) | Error::OutOfRange { .. } => "code decode failure",
            Error::MissingKey(_) | Error::KeyMismatch { .. } => "missing answer key",
            Error::Roster(_) => "unknown student",
            Error::Io { .. } | Error::Image(_) => "unreadable image",
            _ => "processing error",
        }
    }
}
