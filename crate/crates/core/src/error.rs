//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TnfsError>;

#[derive(Debug, Error)]
pub enum TnfsError {
    /// Bad argument or inconsistent model/data geometry.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Shape disagreement between a model and the data fed to it.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    /// A rollout or gradient computation produced a non-finite value.
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    /// Training loss left the finite range.
    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite})")]
    Divergence { epoch: usize, last_finite: String },

    /// Clustering input that admits no solution (e.g. all points identical).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Validity index requested where it is not defined.
    #[error("undefined validity index: {0}")]
    UndefinedIndex(String),

    /// Malformed archive, manifest or CSV content.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    /// Archive version this build does not read.
    #[error("archive version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TnfsError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        TnfsError::InvalidArgument(msg.into())
    }

    pub fn dims(
        context: impl Into<String>,
        expected: impl Into<String>,
        found: impl Into<String>,
    ) -> Self {
        TnfsError::DimensionMismatch {
            context: context.into(),
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        TnfsError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI maps this error to.
    ///
    /// 1 = validation/geometry, 2 = numeric divergence, 3 = i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            TnfsError::InvalidArgument(_)
            | TnfsError::DimensionMismatch { .. }
            | TnfsError::DegenerateData(_)
            | TnfsError::UndefinedIndex(_)
            | TnfsError::Format { .. }
            | TnfsError::VersionMismatch { .. } => 1,
            TnfsError::NumericOverflow(_) | TnfsError::Divergence { .. } => 2,
            TnfsError::Io { .. } => 3,
        }
    }
}
