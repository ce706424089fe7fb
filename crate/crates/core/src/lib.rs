//! Flexible trainable activation functions with exact gradients, an
//! activation-parameter regularizer, LSTM and convolutional autoencoder
//! layers, parameter counting and a multi-trial experiment runner.

pub mod activations;
pub mod complexity;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod regularization;
pub mod stats;
pub mod tensor;
pub mod train;

pub use activations::{ActivationGrad, ActivationKind, FlexActivation, BETA_MIN};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentResult, TrialResult};
pub use nn::{Model, ModelSpec, Network, ParamRole, Parameterized};
pub use optim::{OptimConfig, Optimizer, ParamGroup};
pub use regularization::RegConfig;
pub use tensor::Tensor;
