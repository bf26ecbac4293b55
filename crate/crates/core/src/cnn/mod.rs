//! One-dimensional convolutional zone classifier: inference, backpropagation,
//! optimizer, gradient verification and training.

pub mod gradcheck;
pub mod layer;
pub mod network;
pub mod optim;
pub mod train;

use thiserror::Error;

pub use gradcheck::{grad_check, grad_check_report, GradCheckReport, DEFAULT_GRADCHECK_EPS};
pub use layer::{conv1d_forward, leaky_relu, ConvLayer, Signal};
pub use network::{
    bce_loss, flatten_input, forward, predict, sigmoid, Architecture, ConvNet, Gradients, Layout,
    WeightBundle, BCE_EPSILON, DEFAULT_LEAKY_SLOPE, DEFAULT_THRESHOLD,
};
pub use optim::{adam_step, adam_step_net, AdamConfig, AdamState};
pub use train::{evaluate, train, train_bundle, Example, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CnnError {
    #[error("layer expects {expected} input channels, got {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains a single class")]
    SingleClassDataset,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
}
