use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected {expected}, got shape {shape:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("backward: loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("backward: loss has no differentiation trace; run the forward pass with traced parameters")]
    UntracedLoss,

    #[error("{op}: index {index} out of bounds for {len} rows")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("{what} ({value}) is not divisible by {by}")]
    Indivisible {
        what: &'static str,
        value: usize,
        by: usize,
    },

    #[error("parameter {0:?} is not registered")]
    UnknownParam(String),

    #[error("parameter {0:?} is already registered")]
    DuplicateParam(String),

    #[error("ppm: unsupported magic {found:?}, only binary P6 is supported")]
    PpmBadMagic { found: String },

    #[error("ppm: malformed header: {0}")]
    PpmHeader(String),

    #[error("ppm: truncated payload, expected {expected} bytes, got {got}")]
    PpmTruncated { expected: usize, got: usize },

    #[error("mask rescale: {from}x{from2} -> {to}x{to2} is not a power-of-2 relation per side")]
    MaskRescale {
        from: usize,
        from2: usize,
        to: usize,
        to2: usize,
    },

    #[error("invalid scale recipe: {0}")]
    InvalidRecipe(String),

    #[error("encoder: visible set is empty, at least one visible patch is required")]
    EmptyVisibleSet,

    #[error("patch merge: 2x2 block at ({row},{col}) has mixed visibility; the mask must be constant on merge blocks")]
    MixedVisibilityBlock { row: usize, col: usize },

    #[error("decoder: rescale plan maps feature scale {feature} to {produced}, but the supervision scale is {target}")]
    RescalePlanMismatch {
        feature: usize,
        produced: usize,
        target: usize,
    },

    #[error("loss: tap {tap} (layer {layer}) has zero masked rows")]
    ZeroMaskedRows { tap: usize, layer: usize },

    #[error("optimizer: non-finite gradient for parameter {0:?}; step rejected")]
    NonFiniteGradient(String),

    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("checkpoint: config digest mismatch, expected {expected} but file carries {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("{path}: {reason}")]
    FileFormat { path: PathBuf, reason: String },

    #[error("{path}:{line}: malformed csv row: {reason}")]
    CsvRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("grid coordinate ({row},{col}) outside {rows}x{cols} grid")]
    OutOfGrid {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn file_format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::FileFormat {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
