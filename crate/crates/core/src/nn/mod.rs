//! ReLU MLPs with optional BatchNorm: forward pass, manual backprop,
//! optimisers, training and evaluation.

pub mod forward;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

pub use forward::{backward, forward, hidden_activations, predict, ForwardCache, Mode};
pub use loss::{argmax, loss_xent};
pub use model::{BatchNorm, Gradients, Layer, MlpSpec, ModelParams};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{
    bn_reset, evaluate, train_from, train_model, BnResetStatus, EpochMetrics, Evaluation, TrainConfig, TrainOutcome,
};
