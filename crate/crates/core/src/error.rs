use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::config::ConfigError;
use crate::data::idx::IdxError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("class {0} has no samples")]
    MissingClass(usize),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("shard {0} is empty")]
    EmptyShard(usize),

    #[error("local steps {steps} outside [1, {max}]")]
    StepsOutOfRange { steps: usize, max: usize },

    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),

    #[error("invalid round plan: {0}")]
    InvalidPlan(String),

    #[error("full worker (tau = 1) passed to the straggler correction")]
    CorrectionOnFullWorker,

    #[error("no updates to aggregate")]
    NoUpdates,

    #[error("non-finite parameters after round {round} ({strategy})")]
    NonFinite { round: usize, strategy: String },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
