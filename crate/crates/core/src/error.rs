use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    #[error("tensor shape {shape:?} does not match data length {len}")]
    TensorShape { shape: Vec<usize>, len: usize },

    #[error("mask length mismatch at layer {layer}: expected {expected}, got {got}")]
    MaskLength {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("expected {expected} masks, got {got}")]
    MaskCount { expected: usize, got: usize },

    #[error("sparsity ratio {0} outside [0, 1)")]
    SparsityRatio(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid label {label} for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("episode finished; call reset before stepping again")]
    EpisodeDone,

    #[error("unsupported checkpoint format version {0}")]
    FormatVersion(u32),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("external cost command failed: {0}")]
    ExternalCost(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("training iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
