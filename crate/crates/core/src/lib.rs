//! Per-layer activation-function and dropout-rate selection for feedforward
//! networks.
//!
//! A ReLU baseline is trained once; its learning curve yields an evaluation
//! point (the first epoch where the windowed relative accuracy gradient drops
//! below a threshold). Candidate configurations are then trained only up to
//! that epoch while a greedy, layer-by-layer search picks an activation from
//! `{ReLU, ELU, SELU}` and a dropout rate for each hidden layer. The resulting
//! hybrid network is trained in full and compared with the baseline.
//!
//! Modules:
//! - [`activations`]: scalar ReLU/ELU/SELU and derivatives
//! - [`regularization`]: standard and alpha dropout, He / LeCun initialization
//! - [`nn`]: the training engine
//! - [`curve`]: accuracy gradient, evaluation point, TTR and RER
//! - [`search`]: the greedy layer-wise search
//! - [`data`]: IDX / CIFAR loaders, synthetic teacher datasets, batching
//! - [`harness`]: experiment configs, persistence and the CLI commands

pub mod activations;
pub mod curve;
pub mod data;
pub mod harness;
pub mod nn;
pub mod regularization;
pub mod rng;
pub mod search;

pub use activations::ActivationKind;
pub use curve::{AgParams, LearningCurve};
pub use data::Dataset;
pub use nn::{NetworkSpec, RunRecord, TrainConfig};
pub use search::{run_search, HybridResult, SearchConfig};
