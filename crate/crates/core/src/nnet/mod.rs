//! Inference-only neural primitives: tensors, 3-D convolution, batch-norm,
//! activations, pooling, dense layers, an acyclic network graph with shape
//! inference, an optimized executor and an independent reference executor.

mod exec;
pub mod ops;
mod network;
mod reference;
mod tensor;
mod weights;

pub use exec::{forward, forward_all};
pub use network::{BlockTag, LayerSpec, Network, Node, NodeId, ParamSpec, INPUT};
pub use ops::{avgpool3d, batchnorm_inference, concat, conv3d, dense, leaky_relu, relu, sigmoid, sigmoid_scalar};
pub use reference::{reference_forward, reference_forward_all};
pub use tensor::Tensor;
pub use weights::{Weights, MPW_MAGIC};
