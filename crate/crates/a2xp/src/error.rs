//! Error types shared across the crate.

use std::path::PathBuf;

/// Errors produced by prompt construction, training, evaluation and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is invalid. Carries the offending field name.
    #[error("config error: {field}: {message}")]
    Config { field: String, message: String },

    /// Tensor shapes do not line up.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// An expert prompt has (near-)zero norm and cannot be normalized.
    /// Signals that adaptation never moved the prompt.
    #[error("degenerate expert: L2 norm {norm:.3e} below {epsilon:.1e}")]
    DegenerateExpert { norm: f64, epsilon: f64 },

    /// A cached expert embedding was used after the heads or the bank changed.
    #[error("stale expert-key cache: {0}")]
    CacheInvalid(String),

    /// Domain directories do not share the same class set.
    #[error("inconsistent classes in domain '{domain}': {detail}")]
    InconsistentClasses { domain: String, detail: String },

    /// A dataset (or split) contains no samples where at least one is required.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A label lies outside [0, num_classes).
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// Training produced a non-finite loss.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// File I/O failed. Carries the path for diagnostics.
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A checkpoint or manifest file is malformed.
    #[error("invalid file format at {path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for config/input problems,
    /// 3 for runtime numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFailure(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
