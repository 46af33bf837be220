//! Fuzzy cognitive map classifiers trained by gradient descent.
//!
//! A fully connected map runs a fixed number of state-equation steps from an
//! encoded observation; the final output-concept activations drive a binary
//! or one-hot prediction head. Training backpropagates the loss through the
//! shared (W, b) of the unrolled steps. The intermediate state one step
//! before the readout doubles as a supervised feature transformation, which
//! the experiment driver scores with internal clustering indices and by
//! feeding downstream classifiers.

pub mod baselines;
pub mod data;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod infer;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod train;

pub use error::{FcmError, Result};
pub use matrix::Mat;
pub use model::{ActivationConfig, FcmModel, Trajectory, Variant};
