use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("support mismatch at outcome {index}: p > 0 but q = 0")]
    SupportMismatch { index: usize },

    #[error("quadrature did not converge: {nodes} vs {doubled} nodes differ by {delta:e}")]
    QuadratureNotConverged { nodes: usize, doubled: usize, delta: f64 },

    #[error("non-positive D_alpha {value:e} at heatmap cell (mu={mu}, sigma={sigma})")]
    NonPositiveDAlpha { mu: f64, sigma: f64, value: f64 },

    #[error("non-finite loss at step {step} (prompt row {prompt})")]
    NonFiniteLoss { step: usize, prompt: usize },

    #[error("k={k} exceeds the sample count n={n} of problem {problem}")]
    KExceedsSamples { problem: usize, k: usize, n: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
