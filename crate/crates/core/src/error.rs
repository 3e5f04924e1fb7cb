// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Errors raised across the toolkit.
///
/// Variants are grouped by the contract they guard rather than by module so
/// callers can map them onto exit codes without knowing which stage failed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file did not parse as the expected format.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A corpus case failed offset or marker validation.
    #[error("validation error at logical_index {logical_index}: {message}")]
    CaseValidation {
        logical_index: usize,
        message: String,
    },

    /// A structural corpus or config invariant failed.
    #[error("validation error: {0}")]
    Validation(String),

    /// Missing or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A requested (language, marker) or runner pairing is not supported.
    #[error("unsupported: {0}")]
    Capability(String),

    /// Credential could not be resolved or was rejected.
    #[error("credential error: {0}")]
    Credential(String),

    /// Retries exhausted on rate-limit or transient failures.
    #[error("throttled after {attempts} attempts: {message}")]
    Throttle { attempts: u32, message: String },

    /// The provider answered with something we could not interpret.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A documented precondition was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor or stream dimensions disagree.
    #[error("shape error: {0}")]
    Shape(String),

    /// Both Welch samples have zero variance.
    #[error("degenerate samples: {0}")]
    DegenerateSample(String),

    /// An attention row lost all of its mass under an intervention.
    #[error("degenerate attention row {row} in head {head}")]
    DegenerateRow { head: usize, row: usize },

    /// Runs in one batch cannot be combined.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// A required toolchain is not installed.
    #[error("environment error: {0}")]
    Environment(String),

    /// Runner output did not contain a recognizable summary.
    #[error("could not parse {runner} output")]
    RunnerParse { runner: String, raw: String },

    /// Filesystem failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
