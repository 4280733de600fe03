//! Multi-domain expression synthesis.
//!
//! A single generator translates a face into any of the seven expression
//! domains given a one-hot target map concatenated to its input. The
//! discriminator scores local patches for realness and predicts the domain
//! of the whole image. Training alternates one discriminator and one
//! generator Adam update per step.

mod checkpoint;
mod data;
mod domain;
mod loss;
mod model;
mod nn;
mod real;
mod tensor;
mod train;

use thiserror::Error;

pub use checkpoint::{CheckpointHeader, TensorEntry, CHECKPOINT_FORMAT};
pub use data::{from_unit, generator_forward, synthesize, tile_label, to_unit, FaceSet, ImageTensor};
pub use domain::{ExpressionDomain, ParseDomainError, NUM_DOMAINS};
pub use loss::{adversarial_loss, argmax_rows, bce_logits, cross_entropy, l1, sigmoid, PROB_CLAMP};
pub use model::{condition, DiscCache, DiscOutput, Discriminator, GanConfig, Generator};
pub use nn::{backward as backward_layers, forward as forward_layers, Cache, Conv, ConvTranspose, Init, InstanceNorm, Layer, ParamLayout, ParamSpec};
pub use real::{matmul, Real};
pub use tensor::{col2im, im2col, Tensor};
pub use train::{Batch, DiscLoss, GanCheckpoint, GanState, GenLoss, Objective, StepMetrics};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("BadShape: {0}")]
    BadShape(String),
    #[error("InvalidConfig: {0}")]
    Config(String),
    #[error("EmptyDataset: no training images")]
    EmptyDataset,
    #[error("VersionMismatch: found {0}, this reader handles {CHECKPOINT_FORMAT}")]
    VersionMismatch(String),
    #[error("ChecksumMismatch: checkpoint is truncated or corrupted")]
    ChecksumMismatch,
    #[error("CorruptCheckpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Face(#[from] crate::face::FaceError),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl GanError {
    pub fn kind(&self) -> &'static str {
        match self {
            GanError::BadShape(_) => "BadShape",
            GanError::Config(_) => "InvalidConfig",
            GanError::EmptyDataset => "EmptyDataset",
            GanError::VersionMismatch(_) => "VersionMismatch",
            GanError::ChecksumMismatch => "ChecksumMismatch",
            GanError::CorruptCheckpoint(_) => "CorruptCheckpoint",
            GanError::Face(e) => e.kind(),
            GanError::Io(_) => "IoError",
            GanError::Json(_) => "JsonError",
        }
    }
}
