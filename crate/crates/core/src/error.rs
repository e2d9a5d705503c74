use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad tensor magic {0:?}, expected \"RVIMG1\"")]
    BadMagic([u8; 6]),

    #[error("truncated tensor file: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("tensor dimensions {h}x{w}x{c} overflow the addressable size")]
    DimsOverflow { h: u32, w: u32, c: u32 },

    #[error("degenerate dimensions {0}x{1}x{2}: every dimension must be at least 1")]
    DegenerateDims(usize, usize, usize),

    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("point at the origin has undefined angles")]
    OriginPoint,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{dims:?} is not divisible by {factors:?}")]
    NotDivisible {
        dims: (usize, usize),
        factors: (usize, usize),
    },

    #[error("range {range} exceeds r_max {r_max}")]
    RangeTooLarge { range: f64, r_max: f64 },

    #[error("value {0} lies outside the normalized [-1, 1] square")]
    OutOfUnitSquare(f64),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("timestep {t} outside 1..={steps}")]
    BadTimestep { t: usize, steps: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
