use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scramble spec: {0}")]
    InvalidScramble(String),

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("malformed {what}: {reason}")]
    Decode { what: &'static str, reason: String },

    #[error("CIFAR-10 parse error in {file}: {reason} (byte offset {offset})")]
    Cifar {
        file: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("missing file or directory: {0}")]
    Missing(PathBuf),

    #[error("class label {label} out of range for {classes} classes")]
    ClassOutOfRange { label: usize, classes: usize },

    #[error("backward called on a tensor that does not require grad")]
    Detached,

    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("epoch {epoch} out of range for a {total}-epoch schedule")]
    EpochOutOfRange { epoch: usize, total: usize },

    #[error("no positive width reaches {target} parameters at depth {depth}")]
    Unmatchable { target: u64, depth: usize },

    #[error("probability {0} outside [0, 1]")]
    Probability(f64),

    #[error("layer {0} cannot be visualized as filters")]
    NotVisualizable(String),

    #[error("metric {metric} does not apply to task {task}")]
    MetricMismatch { metric: String, task: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("mixed record schema versions: {0} and {1}")]
    SchemaMismatch(u32, u32),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("integrity check failed for {file}: {reason}")]
    Integrity { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
