//! Bitemporal change detection with an optional DEM branch.
//!
//! [`BbuNet`] is a siamese U-Net whose skip connections carry the absolute
//! difference of pre- and post-event encoder features. With
//! [`ModelConfig::use_bbf`] set, every skip is fused with stage-matched DEM
//! features by a small convolutional block (BBU-net); otherwise the network
//! is the plain Unet-Siam-Diff baseline. Training minimizes a cloud-masked,
//! class-weighted binary cross-entropy with AdamW and keeps the epoch with
//! the lowest validation loss.

mod data;
mod loss;
mod metrics;
mod net;
pub mod synth;
mod train;

use landslide_core::augment::AugmentError;
use landslide_core::patchkit::PatchError;
use landslide_tensor::TensorError;
use thiserror::Error;

pub use data::{collate, Batch, DiskSource, MemorySource, SampleSource};
pub use loss::{masked_weighted_bce, masked_weighted_bce_sum, predict_mask};
pub use metrics::{format_report, write_report, ConfusionCounts, ReportRow};
pub use net::{groups_for, BbuNet, ModelConfig};
pub use train::{evaluate, train, EpochStats, EvalResult, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("checkpoint does not match the model: {0}")]
    CheckpointMismatch(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch_ids:?}; grad norms {grad_norms:?}")]
    NonFinite {
        epoch: usize,
        batch_ids: Vec<String>,
        loss: f64,
        grad_norms: Vec<(String, f64)>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
