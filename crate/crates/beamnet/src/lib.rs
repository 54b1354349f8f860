//! Learned direction-of-arrival estimator: a stack of dilated
//! depthwise-separable convolution banks applied to raw multichannel
//! audio, pooled into per-filter pseudo-energies and mapped to either a
//! unit-circle regression or an azimuth class.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

mod array;
mod fast;
pub mod infer;
pub mod io;
mod kernels;
pub mod model;
pub mod ops;
mod scalar;
pub mod spec;
pub mod train;

pub use array::NdArray;
pub use beamlab_core::classify_azimuth as classify_label;
pub use infer::{infer_doa, InferenceSession};
pub use io::{load_model, load_model_for, save_model};
pub use model::Model;
pub use scalar::Scalar;
pub use spec::{Head, ModelSpec, ParamEntry, ParamKind, ParamLayout};
pub use train::{
    adam_step, evaluate, lr_schedule, train, AdamConfig, AdamState, Example, History, TrainConfig, TrainOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("corrupt model file {path}: {reason}")]
    CorruptModel { path: PathBuf, reason: String },
    #[error("model does not match: {0}")]
    VersionMismatch(String),
    #[error("training diverged at iteration {iteration}; last good checkpoint kept")]
    Diverged {
        iteration: usize,
        checkpoint: Box<Model<f32>>,
    },
    #[error(transparent)]
    Core(#[from] beamlab_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
