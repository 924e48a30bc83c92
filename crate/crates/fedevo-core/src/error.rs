use alloc::string::String;
use core::fmt;

/// Errors produced by model construction, training and aggregation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Vector or matrix dimensions do not agree.
    DimensionMismatch { expected: usize, found: usize },
    /// A covariance matrix is not symmetric positive definite.
    NotPositiveDefinite,
    /// A sample contains NaN or infinite components.
    NonFiniteSample,
    /// The sample covariance is undefined (fewer than two samples and no prior).
    UndefinedCovariance,
    /// An operation requires a model with at least one cluster.
    EmptyModel,
    /// An operation requires a non-empty input.
    EmptyInput,
    /// Clusters with different class tags cannot be merged.
    ClassMismatch,
    /// A configuration value is out of its valid range.
    InvalidConfig(&'static str),
    /// A class label is outside `[0, n_classes)`.
    InvalidLabel { label: usize, n_classes: usize },
    /// Not enough data to compute the requested statistic.
    InsufficientData,
    /// Paired inputs have different lengths.
    LengthMismatch { left: usize, right: usize },
    /// Prediction was requested from a classifier with an untrained class model.
    Untrained,
    /// The classifier is still buffering warm-up samples; call `finalize` first.
    NotFinalized,
    /// A snapshot declares an unsupported format version.
    SnapshotVersion { found: u32 },
    /// A snapshot violates the schema (shape, symmetry, finiteness).
    SnapshotSchema(String),
    /// Snapshots with different dimensions, class counts or configs cannot be aggregated.
    IncompatibleSnapshots(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NotPositiveDefinite => {
                write!(f, "covariance matrix is not positive definite")
            }
            Error::NonFiniteSample => write!(f, "sample contains non-finite components"),
            Error::UndefinedCovariance => {
                write!(f, "sample covariance undefined: fewer than two samples and no prior")
            }
            Error::EmptyModel => write!(f, "model has no clusters"),
            Error::EmptyInput => write!(f, "input is empty"),
            Error::ClassMismatch => write!(f, "clusters carry different class tags"),
            Error::InvalidConfig(what) => write!(f, "invalid config: {what}"),
            Error::InvalidLabel { label, n_classes } => {
                write!(f, "label {label} outside [0, {n_classes})")
            }
            Error::InsufficientData => write!(f, "not enough data"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::Untrained => write!(f, "classifier has an untrained class model"),
            Error::NotFinalized => write!(f, "classifier warm-up not finalized"),
            Error::SnapshotVersion { found } => {
                write!(f, "unsupported snapshot format version {found}")
            }
            Error::SnapshotSchema(msg) => write!(f, "snapshot schema violation: {msg}"),
            Error::IncompatibleSnapshots(msg) => write!(f, "incompatible snapshots: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
