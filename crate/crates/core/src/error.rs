use std::path::PathBuf;

/// Failures while decoding one of the binary or text file formats.
#[derive(thiserror::Error, Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    BadVersion(u32),
    #[error("truncated input: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
    #[error("malformed text at line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("image decode: {0}")]
    Image(String),
}

#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// A precondition of an operation was not met by its arguments.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("keypoint {index} at (x={x}, y={y}) is outside the {width}x{height} field")]
    OutOfBounds {
        index: usize,
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("degenerate negative pool: no candidate outside the safe radius for correspondence {0}")]
    DegeneratePool(usize),
    #[error("no consensus: best model has {inliers} inliers, need at least {required}")]
    NoConsensus { inliers: usize, required: usize },
    #[error("training diverged: non-finite values in {0}")]
    Divergence(String),
    #[error("non-finite objective value {0}")]
    NonFinite(f64),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: DecodeError,
    },
    #[error("io {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, source: DecodeError) -> Self {
        Error::Decode {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::OutOfBounds { .. } => "bounds",
            Error::Degenerate(_) => "degenerate",
            Error::DegeneratePool(_) => "degenerate-pool",
            Error::NoConsensus { .. } => "no-consensus",
            Error::Divergence(_) => "divergence",
            Error::NonFinite(_) => "non-finite",
            Error::Fixture(_) => "fixture",
            Error::Decode { .. } => "decode",
            Error::Io { .. } => "io",
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::Error::Contract(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
