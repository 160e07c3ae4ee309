use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format for {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("too few patches for EM: need at least {needed}, got {got}")]
    TooFewPatches { needed: usize, got: usize },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model file version {0}")]
    ModelVersion(u32),

    #[error("model invariant violated: {0}")]
    InvariantViolation(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("ADMM iterate became non-finite at iteration {iteration} ({variable})")]
    Diverged { iteration: usize, variable: &'static str },

    #[error("unreadable corpus files: {}", .0.join("; "))]
    Corpus(Vec<String>),

    #[error("experiment stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("spec error: {0}")]
    Spec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

/// Attaches a stage name to errors raised inside an experiment pipeline.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
