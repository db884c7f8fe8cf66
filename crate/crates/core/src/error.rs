use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("unsupported bit depth {depth} in {path} (expected 8)")]
    UnsupportedBitDepth { path: PathBuf, depth: u8 },

    #[error("{path} is grayscale; enable channel expansion to load it as RGB")]
    GrayscaleImage { path: PathBuf },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid dimensions {height}x{width}: {reason}")]
    InvalidDimensions {
        height: usize,
        width: usize,
        reason: &'static str,
    },

    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },

    #[error("mask contains a single class; both lesion and background pixels are required")]
    SingleClassMask,

    #[error("patch size {patch_size} is invalid for a {height}x{width} mask")]
    InvalidPatchSize {
        patch_size: usize,
        height: usize,
        width: usize,
    },

    #[error("no {pool} patches remain after removing boundary patches (patch size {patch_size} too coarse for this mask)")]
    EmptyPatchPool {
        pool: &'static str,
        patch_size: usize,
    },

    #[error("ablation {kind} requires a segmentation mask")]
    MissingMask { kind: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible cue spec: {0}")]
    InfeasibleSpec(String),

    #[error("class {class} has no training samples")]
    MissingClass { class: usize },

    #[error("empty evaluation set")]
    EmptyDataset,

    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),

    #[error("missing cue records")]
    MissingCueRecords,

    #[error("variant dataset does not match the base dataset: {0}")]
    VariantMismatch(String),

    #[error("split {split} has {count} sample(s); pairing needs at least 2")]
    SplitTooSmall { split: &'static str, count: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
