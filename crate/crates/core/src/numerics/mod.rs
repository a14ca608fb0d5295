//! Dense f64 tensors, a reverse-mode tape, Adam, and the binary tensor
//! container used by checkpoints.

pub mod adam;
pub mod container;
pub mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{GatherPlan, Graph, NodeId, PROB_FLOOR};
pub use tensor::Tensor;
