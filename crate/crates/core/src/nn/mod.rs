//! Minimal trainable networks: dense and 2-D convolution layers with manual
//! backpropagation and an Adam optimizer.

mod adam;
pub mod conv;
mod dense;
mod loss;
mod network;

pub use adam::Adam;
pub use dense::{Activation, Dense, Init, Mlp, MlpCache};
pub use loss::{argmax, cross_entropy, softmax};
pub use network::{Architecture, ConvLayer, ConvShape, LayerKind, LayerSpec, Mask, Network};
