use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("backward called on a stale tape; run a fresh forward pass first")]
    StaleTape,
    #[error("backward requires a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("parameter `{0}` not found")]
    UnknownParam(String),
    #[error("parameter `{0}` has no gradient buffer")]
    MissingGrad(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("episode already finished; call reset or restore")]
    EpisodeDone,
    #[error("snapshot rejected: {0}")]
    Snapshot(String),
    #[error("empty buffer")]
    EmptyBuffer,
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("metrics error: {0}")]
    Metrics(String),
    #[error("epoch {epoch} failed: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by a bad configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Epoch { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
