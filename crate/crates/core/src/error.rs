use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the selection toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation precondition (label of the wrong
    /// hierarchy, parameters of the wrong kind, zero step index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("window too short: {0}")]
    WindowTooShort(String),

    #[error("too few trajectories: need at least {needed}, got {got}")]
    TooFewTrajectories { needed: usize, got: usize },

    #[error("too few increments for {model}: need at least {needed}, got {got}")]
    TooFewIncrements {
        model: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("degenerate variance ({0:e})")]
    DegenerateVariance(f64),

    /// The gamma model cannot describe a series containing zero or negative steps.
    #[error("non-positive increment {value} at step {step}")]
    NonPositiveIncrement { step: usize, value: f64 },

    #[error("non-finite likelihood")]
    NonFiniteLikelihood,

    #[error("no applicable model: every candidate scored +inf")]
    NoApplicableModel,

    #[error("conditioned to empty set")]
    EmptyRetainedSet,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("censored trajectory: threshold {threshold} not reached in {max_steps} steps")]
    Censored { threshold: f64, max_steps: usize },

    #[error("provider failure: {0}")]
    Provider(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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
