//! Dense tensors and reverse-mode differentiation with double-backward support.

mod graph;
mod tensor;

pub use graph::{GradientMap, Graph, NodeId, Op};
pub use tensor::Tensor;
