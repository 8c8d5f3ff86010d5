//! Minimal dense tensor engine with reverse-mode autodiff, the attention and
//! MLP building blocks, Smooth L1 loss, AdamW, and checkpoint I/O.

pub mod checkpoint;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod scalar;

pub use graph::{Graph, TensorId};
pub use nn::{
    sinusoidal_positions, AttentionBlock, Linear, Mlp, MultiHeadAttention, ParamId, Parameters,
    TensorError,
};
pub use optim::{cosine_lr, AdamW, Precision, TrainConfig};
pub use scalar::Scalar;
