//! Tensors, layers, and networks with exact backpropagation.

pub mod arch;
pub mod layer;
pub mod loss;
pub mod network;
pub mod tensor;

pub use layer::{Layer, LayerKind};
pub use loss::{cross_entropy, cross_entropy_with_grad};
pub use network::{FlatGradient, LayerSpec, Network};
pub use tensor::Tensor;
