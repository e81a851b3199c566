use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation parameter is outside its valid domain (e.g. a non-positive blur sigma).
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Tensor or image extents do not satisfy an operation's shape contract.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A configuration, schedule or architecture description is unusable.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller-supplied value or input file is unusable.
    #[error("input error: {0}")]
    Input(String),
    /// A loss or activation became NaN/inf.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Input data is degenerate (e.g. an all-zero band).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// A checkpoint or weight container could not be decoded.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(format!($($arg)*)) };
}
pub(crate) use dim_err;
