//! Reverse-mode differentiable computation: tensors, the tape, small MLPs,
//! input encodings, and Adam with warmup/cosine schedules.
//!
//! Everything runs in f64. Forward and backward passes are deterministic for
//! fixed inputs regardless of thread count.

pub mod check;
pub mod encoding;
pub mod mlp;
pub mod optim;
pub mod tape;
pub mod tensor;

use thiserror::Error;

pub use encoding::{fourier_frame_embedding, positional_encoding, positional_encoding_on_tape};
pub use mlp::{mlp_forward, mlp_forward_pure, Activation, Layer, MlpParams};
pub use optim::{adam_step, lr_at, AdamState, LrSchedule};
pub use tape::{Gradients, NodeId, Tape, TapeError};
pub use tensor::{matmul, matmul_nt, matmul_tn, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    NonScalarLoss(#[from] TapeError),
    #[error("non-finite gradient for parameter {param_index}")]
    NonFiniteGradient { param_index: usize },
    #[error("embedding dimension must be even, got {dim}")]
    OddDim { dim: usize },
}
