//! Trainable matching head: appearance encoder, cross-graph GCN, the QP
//! layer, temperature softmax and the weighted BCE loss, differentiated with
//! a small tape.

mod checkpoint;
mod features;
pub mod gradcheck;
mod loss;
mod mlp;
mod model;
pub mod tape;

use thiserror::Error;

use crate::matching::MatchError;
use crate::qp::QpError;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use features::{
    aggregate_tracklet_feature, aggregation_weights, encode_appearance, gcn_layer, gcn_update, gcn_weight, iou_matrix,
    AggregationMode, GcnConfig,
};
pub use loss::{sharpen_scores, weighted_bce_loss, LOSS_CLAMP};
pub use mlp::{Mlp, MlpVars, DEFAULT_WIDTH};
pub use model::{
    train, train_step, AdamW, ForwardOptions, ForwardVars, MatchNet, NetGradients, TrainConfig, TrainSample,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("tracklet history is empty")]
    EmptyHistory,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input")]
    NonFinite,
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
