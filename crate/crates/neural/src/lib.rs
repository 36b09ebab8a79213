//! Minimal differentiable substrate: dense tensors, a reverse-mode tape,
//! transformer and recurrent building blocks, Adam, a finite-difference
//! gradient checker and the named-tensor container used for model files.
//!
//! All arithmetic is double precision.

pub mod container;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use container::{sha256_hex, NamedTensors};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{BackwardFn, Graph, Var, IGNORE_TARGET};
pub use layers::{
    Embedding, FeedForward, GruCell, LayerNorm, Linear, MultiHeadAttention, TransformerLayer,
};
pub use optim::{Adam, AdamConfig, WarmupLinear};
pub use params::{Gradients, Init, Param, ParamId, ParamStore};
pub use tensor::{argmax, log_sum_exp, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("malformed tensor container: {0}")]
    Container(String),
    #[error("checksum mismatch: stored {expected}, computed {actual}")]
    Checksum { expected: String, actual: String },
}
