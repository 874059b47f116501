//! A small CNN toolkit with hand-written backward passes: conv, batch norm,
//! CBAM attention, residual blocks, the classifier, optimizers, a finite
//! difference gradient checker and checkpoints.

use std::io;

use thiserror::Error;

use crate::kv::KvError;

mod attention;
mod batchnorm;
mod block;
mod checkpoint;
mod conv;
pub mod gradcheck;
mod linear;
mod model;
mod ops;
mod optim;
mod tensor;

pub use attention::{Cbam, CbamCache, ChannelAttention, ChannelCache, SpatialAttention, SpatialCache};
pub use batchnorm::{BatchNorm2d, BnCache};
pub use block::{BlockCache, ParmBlock};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGeometry, ConvGrads};
pub use gradcheck::{GradCheckConfig, GradCheckReport};
pub use linear::Linear;
pub use model::{format_stages, parse_stages, ForwardCache, Model, ModelConfig, Stage};
pub use ops::{cross_entropy, global_avg_pool, global_avg_pool_backward, relu, relu_backward, sigmoid, softmax};
pub use optim::{Adam, Optimizer, Sgd};
pub use tensor::{Param, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("batch norm needs at least 2 samples in training, got {0}")]
    DegenerateBatch(usize),
    #[error("bad model configuration: {0}")]
    BadConfig(String),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u16),
    #[error("checkpoint truncated in {0}")]
    Truncated(&'static str),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Batch norm uses batch statistics in `Train` and running averages in `Eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
