//! A small CPU convolutional network engine: conv/pool/batchnorm/dropout/
//! dense layers, inference, backprop training and a binary weight format.

mod gradcheck;
mod network;
mod spec;
mod tensor;
mod train;
pub mod weights;

pub use gradcheck::{gradient_check, GradCheck, REL_ERROR_FLOOR};
pub use network::{bce_from_logit, sigmoid, Gradients, LayerParams, Mode, Network, BN_EPSILON, BN_MOMENTUM};
pub use spec::{build_paper_model, count_layer_params, Activation, BlockArch, LayerSpec, NetworkSpec, ParamCount};
pub use tensor::{Dims, Tensor};
pub use train::{
    evaluate, stratified_split, train, train_with_validation, EpochRecord, Sample, TrainConfig, TrainOutcome,
};
pub use weights::{load_weights, save_weights, BlockKind, ParamBlock, WeightBundle};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network at layer {layer}: {reason}")]
    InvalidSpec { layer: usize, reason: String },
    #[error("tensor data has {len} values but dims {dims} need {}", dims.len())]
    DataLength { dims: Dims, len: usize },
    #[error("input dims {found} do not match network input {expected}")]
    InputDims { expected: Dims, found: Dims },
    #[error("non-finite activation after layer {layer}")]
    NonFinite { layer: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains a single class")]
    SingleClass,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("weight file does not start with CGW1")]
    BadMagic,
    #[error("weight file header is truncated")]
    TruncatedHeader,
    #[error("weight file truncated inside the block for layer {layer}")]
    TruncatedBlock { layer: usize },
    #[error("weights do not fit layer {layer}: {detail}")]
    LayerMismatch { layer: usize, detail: String },
    #[error("weight file has {count} trailing bytes")]
    TrailingBytes { count: usize },
    #[error("weight file was written for a different network spec")]
    SpecHashMismatch,
    #[error("non-positive moving variance in layer {layer}")]
    NonPositiveVariance { layer: usize },
    #[error("non-finite weight in layer {layer}")]
    NonFiniteWeights { layer: usize },
}
