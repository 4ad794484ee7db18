//! Minimal neural-network toolkit: autodiff graph, parameters, optimizer,
//! transformer layers and checkpoints.

pub mod checkpoint;
mod graph;
pub mod gradcheck;
pub mod layers;
mod params;
pub mod train;

pub use graph::{AttnSegment, Gradients, Graph, Mat, Var};
pub use params::{
    clip_grad_norm, normal, uniform_fan_in, AdamW, AdamWConfig, ParamId, ParamStore,
};

pub(crate) use graph::{gelu as graph_gelu, log_softmax};
