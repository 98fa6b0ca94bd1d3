//! Pruning neural networks under arbitrary computational budgets with a
//! PPO-Lagrangian agent that picks one sparsity ratio per conv layer.

pub mod checkpoint;
pub mod crl;
pub mod data;
pub mod env;
mod error;
pub mod nn;
pub mod policy;
pub mod pruner;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use nn::{Architecture, LayerSpec, Mask, Network};
pub use tensor::Tensor;
