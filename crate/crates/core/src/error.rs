use thiserror::Error;

/// Errors produced by the boosting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema misuse: {0}")]
    Schema(String),

    #[error("non-finite numerical feature at slot {slot}: {value}")]
    NonFiniteFeature { slot: usize, value: f64 },

    #[error("empty training batch")]
    EmptyBatch,

    #[error("non-finite gradient at sample {sample}, dim {dim}: {value}")]
    NonFiniteGradient { sample: usize, dim: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("action {action} outside the action space ({detail})")]
    InvalidAction { action: String, detail: String },

    #[error("split child is empty")]
    EmptySplitChild,

    #[error("environment stepped after episode end; call reset first")]
    StepAfterDone,

    #[error("unknown environment {0:?}")]
    UnknownEnv(String),

    #[error("model layout does not match environment: {0}")]
    LayoutMismatch(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model stream truncated while reading {0}")]
    Truncated(&'static str),

    #[error("model checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("malformed model: {0}")]
    Malformed(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
