//! Dataset ingestion, the multi-task training loop, evaluation, grid search
//! and modality ablations for the fusion network.

pub mod ablation;
pub mod dataset;
pub mod embedding;
pub mod grid;
pub mod manifest;
pub mod metrics;
pub mod trainer;

pub use ablation::{ablation_run, AblationRow};
pub use dataset::{load_dataset, Dataset, Sample};
pub use embedding::{load_embedding, read_embedding, save_embedding, write_embedding, EmbeddingMatrix};
pub use grid::{grid_search, GridResult, GridRow, GridSpec};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, ManifestRecord, Split};
pub use metrics::{evaluate, EpochMetrics, EvalMetrics};
pub use trainer::{train, Example, Session, StopReason, TrainConfig, TrainOutcome};

use thiserror::Error;

use crate::neural::checkpoint::CheckpointError;
use crate::neural::NeuralError;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("split violation: {0}")]
    SplitViolation(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("embedding format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Market(#[from] crate::market::MarketError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TrainingError>;
