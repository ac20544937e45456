//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset ingestion, capacity checks and the numeric
/// pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structural problems in input files (ragged rows, bad headers, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Content that does not parse (characters outside the alphabet, ...).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("bit width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },

    /// An operation was asked to materialize something beyond its dense
    /// limit. The message names the fallback when one exists.
    #[error("{what} supports n <= {limit}, got n = {n}{hint}")]
    Capacity {
        what: &'static str,
        n: usize,
        limit: usize,
        hint: &'static str,
    },

    #[error("subset budget {budget} is below the minimum {min}")]
    BudgetTooSmall { budget: usize, min: usize },

    #[error("order spectrum undefined: total spectral power is zero")]
    UndefinedSpectrum,

    #[error("need at least {need} anchors, have {have}")]
    InsufficientAnchors { need: usize, have: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A training loss left the finite range. Carries the step index and the
    /// checksum of the parameter vector at the failure for diagnosis.
    #[error("non-finite loss at step {step} (parameter checksum {param_checksum:#018x})")]
    NonFiniteLoss { step: usize, param_checksum: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// A dense-table operation received a table that does not cover the
    /// required index set.
    #[error("coverage error: {0}")]
    Coverage(String),
}

impl Error {
    /// Attaches the offending path to an I/O failure.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn capacity(what: &'static str, n: usize, limit: usize) -> Self {
        Error::Capacity {
            what,
            n,
            limit,
            hint: "",
        }
    }

    pub(crate) fn capacity_hint(
        what: &'static str,
        n: usize,
        limit: usize,
        hint: &'static str,
    ) -> Self {
        Error::Capacity {
            what,
            n,
            limit,
            hint,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
