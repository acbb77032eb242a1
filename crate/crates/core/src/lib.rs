//! Sparse three-way tensor completion.
//!
//! Observations `y_ijk` (station × metric × time slot) are fitted by a
//! rank-R CP model with per-index biases, trained one entry at a time with
//! stochastic gradient descent. The optimizer family covers plain SGD, a
//! linear PID-refined error, and a PID controller whose integral and
//! derivative terms pass through `|x|^α·sign(x)`.
//!
//! Modules map onto the workflow: [`sparse_tensor`] (ingest, split,
//! synthesize), [`model`] (prediction and loss), [`optimizer`] (update
//! rules), [`trainer`] (epochs, termination, comparison, grid search) and
//! [`cli`] (the `lft` command).

pub mod cli;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod sparse_tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{BiasRegularization, InitScheme, Model, ParamGroup};
pub use optimizer::{PidGains, PidState};
pub use sparse_tensor::{Entry, SparseTensor, TensorShape};
pub use trainer::{OptimizerKind, TrainConfig, TrainReport};
