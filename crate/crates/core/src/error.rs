use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },

    #[error("no interactions survive the {k}-core filter")]
    EmptyAfterFilter { k: usize },

    #[error("cannot index an empty interaction list")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding vector for {entity} {id} has zero norm")]
    ZeroNormVector { entity: Entity, id: usize },

    #[error("layer index {index} out of range for {layers} propagated layers")]
    LayerIndexOutOfRange { index: usize, layers: usize },

    #[error("prior constant must lie in [0, 1), got {0}")]
    InvalidConstant(f64),

    #[error("{kind} requires exactly {expected} negative(s) per row, got {actual}")]
    WrongNegativeCount {
        kind: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite gradient for {entity} {id}")]
    NonFiniteGradient { entity: Entity, id: usize },

    #[error("non-finite loss value")]
    NonFiniteLoss,

    #[error("ground truth set is empty")]
    EmptyGroundTruth,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Machine-parsable tag printed by the CLI on failure.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::InvalidConstant(_) | Error::WrongNegativeCount { .. } => "CONFIG_INVALID",
            Error::EmptyAfterFilter { .. } | Error::EmptyInput => "DATA_EMPTY",
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss | Error::ZeroNormVector { .. } => "NONFINITE",
            Error::MalformedLine { .. } => "DATA_MALFORMED",
            Error::Checkpoint(_) => "CHECKPOINT_INVALID",
            Error::Io { .. } | Error::Csv(_) => "IO_ERROR",
            Error::DimensionMismatch { .. } | Error::LayerIndexOutOfRange { .. } | Error::EmptyGroundTruth => {
                "INTERNAL"
            }
        }
    }
}

/// Which side of the bipartite graph an embedding row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entity {
    User,
    Item,
}

impl std::fmt::Display for Entity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entity::User => f.write_str("user"),
            Entity::Item => f.write_str("item"),
        }
    }
}
