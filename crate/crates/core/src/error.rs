use thiserror::Error;

use crate::pipeline::GaussianPeak;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical evaluation lost too much precision to be trusted.
    #[error("numerical accuracy lost: {0}")]
    Accuracy(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no pulse: {0}")]
    NoPulse(String),

    #[error("cannot build a histogram from an empty tag list")]
    EmptyHistogram,

    #[error("no peaks found in histogram")]
    NoPeaks,

    /// The least-squares refinement ran out of iterations. The best
    /// parameters seen so far are carried along.
    #[error("peak fit did not converge after {iterations} iterations")]
    FitNotConverged {
        iterations: usize,
        best: Vec<GaussianPeak>,
    },

    #[error("inconsistent counts: {0}")]
    Inconsistent(String),

    #[error("degenerate comparison: {0}")]
    Degenerate(String),

    #[error("slot cap of {cap} reached after {events} of {target} events")]
    SlotCap { cap: u64, events: u64, target: u64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
