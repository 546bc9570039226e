//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {path}")]
    MissingFile { path: PathBuf },

    /// Raw trace length must be a whole number of 8-byte I/Q samples.
    #[error("truncated trace file {path}: {trailing} trailing byte(s) beyond the last whole sample")]
    TruncatedFile { path: PathBuf, trailing: u64 },

    #[error("i/o error at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite sample at index {index} (use permissive mode to zero-fill)")]
    NonFiniteSample { index: u64 },

    #[error("bad transform length: {detail}")]
    BadLength { detail: String },

    #[error("invalid configuration: {detail}")]
    BadConfig { detail: String },

    #[error("class {class_index} ({class_name}) has {available} frame(s), {needed} requested (short {})", .needed - .available)]
    InsufficientSamples {
        class_index: usize,
        class_name: String,
        needed: u64,
        available: u64,
    },

    #[error("class {class_index} has {support} sample(s); at least 2 required to split")]
    DegenerateClass { class_index: usize, support: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: [u8; 4] },

    #[error("unsupported format version {found} in {path} (supported: {supported})")]
    VersionMismatch {
        path: PathBuf,
        supported: u16,
        found: u16,
    },

    #[error("corrupt file {path}: {detail}")]
    CorruptLength { path: PathBuf, detail: String },

    #[error("bad network dimensions: {detail}")]
    BadDims { detail: String },

    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("label vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("class {class_index} has no samples")]
    EmptyClass { class_index: usize },

    #[error("vector {label:?} is constant; correlation undefined")]
    ConstantVector { label: String },

    #[error("component frequency {frequency_hz} Hz outside the Nyquist band (+/-{nyquist_hz} Hz)")]
    BadBand { frequency_hz: f64, nyquist_hz: f64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for one error variant, used by the CLI's
    /// error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile { .. } => "missing_file",
            Error::TruncatedFile { .. } => "truncated_file",
            Error::Io { .. } => "io",
            Error::NonFiniteSample { .. } => "non_finite_sample",
            Error::BadLength { .. } => "bad_length",
            Error::BadConfig { .. } => "bad_config",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::DegenerateClass { .. } => "degenerate_class",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::BadMagic { .. } => "bad_magic",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::CorruptLength { .. } => "corrupt_length",
            Error::BadDims { .. } => "bad_dims",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::EmptyClass { .. } => "empty_class",
            Error::ConstantVector { .. } => "constant_vector",
            Error::BadBand { .. } => "bad_band",
            Error::Json(_) => "json",
        }
    }
}
