//! Dense-tensor network engine.
//!
//! Everything needed to train the surrogates: channels-last tensors, the
//! layer kernels with their exact gradients, shape-checked layer graphs,
//! masked squared-error loss, truncated-normal initialisation and Adam.
//! All numeric code is generic over [`Scalar`](crate::Scalar).

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod init;
mod loss;
pub mod ops;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport, LayerCheck};
pub use graph::{Activations, Graph, GraphBuilder, LayerSpec, Network, Node, NodeId};
pub use init::{truncated_normal, truncated_normal_init, DEFAULT_INIT_STD};
pub use loss::{masked_mse_loss, mse_loss};
pub use ops::Padding;
pub use tensor::Tensor;
