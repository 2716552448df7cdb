//! Dense-tensor compute core, reverse-mode differentiation, the residual
//! U-Net denoiser and its optimizer.

pub mod denoiser;
pub mod graph;
pub mod optim;
pub mod tensor;

pub use denoiser::{
    batch_tensor, denoise_one, denoiser_forward, forward_graph, unbatch, Architecture, DenoiserParams, ForwardNodes,
    Init, NamedTensor, TimestepEmbedding,
};
pub use graph::{Graph, NodeId};
pub use optim::{global_norm, AdamConfig, EmaState, OptimizerState, StepReport};
pub use tensor::{Scalar, Tensor};
