//! Error type shared by every pipeline stage.

use std::path::PathBuf;

use thiserror::Error;

/// Failure modes of the pipeline, grouped by contract rather than by module.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure, with the path that was being accessed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input that could not be decoded (JSON, TOML, image data,
    /// annotation lines). `context` names the file or line.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    /// Structurally valid input that violates the expected schema, such as
    /// an annotation label outside the known naming scheme.
    #[error("schema error: {0}")]
    Schema(String),

    /// A referenced resource is missing, such as an image file named by an
    /// annotation entry.
    #[error("load error: {0}")]
    Load(String),

    /// A parameter outside its documented domain (negative counts,
    /// fractions outside [0, 1], contamination outside (0, 0.5]).
    #[error("domain error: {0}")]
    Domain(String),

    /// A request that exceeds what the data can supply, such as split
    /// counts larger than the available sample pools.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Mismatched or unsupported tensor/image dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration: unknown keys, unknown enum names, or values
    /// that cannot be combined.
    #[error("config error: {0}")]
    Config(String),

    /// A persisted artifact does not match what the loader expects
    /// (checkpoint parameter shapes, model bundle fields).
    #[error("contract error: {0}")]
    Contract(String),

    /// A numeric invariant failed at runtime, such as a non-finite loss.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training could not proceed or converge.
    #[error("training error: {0}")]
    Training(String),

    /// An expected output artifact is absent or unreadable.
    #[error("artifact error: {0}")]
    Artifact(String),

    /// A pipeline stage failed; names the stage and keeps the cause.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Convenience constructor tying an `io::Error` to its path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wraps an error with the pipeline stage it occurred in.
    pub fn at_stage(stage: &'static str, source: Error) -> Self {
        Error::Stage { stage, source: Box::new(source) }
    }
}

/// Extension adding stage attribution to any fallible pipeline step.
pub trait StageExt<T> {
    /// Tags the error with the pipeline stage name on failure.
    fn stage(self, name: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: &'static str) -> Result<T> {
        self.map_err(|e| Error::at_stage(name, e))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
