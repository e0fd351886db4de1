use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("graph has {components} connected components; take the largest connected component first")]
    Disconnected { components: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corruption stopped after {achieved} of {requested} edits ({rejected} rejected draws)")]
    CorruptionIncomplete {
        achieved: usize,
        requested: usize,
        rejected: usize,
    },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Locations are `[subgraph, row]`.
    #[error(
        "context row {row:?} lies within epsilon of rows {first:?} and {second:?}, which do not match each other"
    )]
    AmbiguousMatch {
        row: [usize; 2],
        first: [usize; 2],
        second: [usize; 2],
    },

    #[error("distribution for item {index} sums to {sum}, expected 1")]
    NotNormalized { index: usize, sum: f64 },

    #[error("stitching left {uncovered} context rows uncovered after {iterations} iterations")]
    NonTermination { iterations: usize, uncovered: usize },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
