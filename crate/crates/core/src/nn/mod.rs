//! Deterministic f64 training engine: dense, conv2d, max-pool, flatten and
//! softmax-output layers with manual backpropagation and momentum SGD.

mod network;
mod optim;
mod params;
mod spec;
mod train;

pub use network::{backward_pass, forward_pass, loss, softmax_cross_entropy, ForwardCache};
pub use optim::sgd_step;
pub use params::{Gradients, LayerParams, Params};
pub use spec::{LayerKind, LayerSpec, NetworkSpec, RunRecord, Shape, TrainConfig};
pub use train::{evaluate, train, train_with};

use thiserror::Error;

use crate::data::DataError;
use crate::regularization::RegularizationError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Regularization(#[from] RegularizationError),
}
