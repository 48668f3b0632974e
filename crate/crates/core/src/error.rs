use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header {}: {reason}", path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("data length mismatch in {}: expected {expected} bytes, found {actual}", path.display())]
    DataLengthMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("unsupported dtype {dtype:?} in {}", path.display())]
    UnsupportedDtype { path: PathBuf, dtype: String },

    #[error("{} holds dtype {found:?}, expected {expected:?}", path.display())]
    WrongDtype {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("malformed annotation file {}: {reason}", path.display())]
    MalformedAnnotation { path: PathBuf, reason: String },

    #[error("tooth number {0} outside 1..=32")]
    ToothOutOfRange(i64),

    #[error("degenerate box for tooth {tooth} on slice {slice}")]
    DegenerateBox { tooth: u8, slice: usize },

    #[error("duplicate box for tooth {tooth} on slice {slice}")]
    DuplicateBox { tooth: u8, slice: usize },

    #[error("box for tooth {tooth} on slice {slice} lies outside the volume")]
    AnnotationOutOfBounds { tooth: u8, slice: i64 },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tooth {0} is not present")]
    ToothAbsent(u8),

    #[error("mask is empty")]
    EmptyMask,

    #[error("box {min:?}..{max:?} lies outside volume of shape {shape:?}")]
    BoxOutOfBounds {
        min: [usize; 3],
        max: [usize; 3],
        shape: [usize; 3],
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("teeth {0} and {1} overlap")]
    PhantomOverlap(u8, u8),

    #[error("teeth do not fit: {0}")]
    TeethDoNotFit(String),

    #[error("segmenter failed: {0}")]
    Segmenter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
