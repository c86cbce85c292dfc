//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, FazeError>;

/// Errors raised by the gaze-estimation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum FazeError {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input is inside the domain but at a degenerate configuration
    /// (e.g. a gaze vector parallel to the gimbal axis).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Shapes or dimensions do not match the configured architecture.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A gaze ray does not intersect the target plane.
    #[error("gaze ray does not intersect the target plane")]
    NoIntersection,

    /// Filesystem failure, annotated with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A container file is malformed; `offset` is the byte position at
    /// which the problem was detected.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A container file was written by an incompatible format version.
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    /// A pipeline stage is missing an upstream artifact.
    #[error("missing artifact for stage `{stage}`: {message}")]
    Dependency { stage: String, message: String },

    /// A non-finite value appeared where the math guarantees finiteness.
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl FazeError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        FazeError::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FazeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage/config, 2 data/format, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            FazeError::InvalidArgument(_) | FazeError::Configuration(_) => 1,
            FazeError::Numeric(_) => 3,
            _ => 2,
        }
    }
}
