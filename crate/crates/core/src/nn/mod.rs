//! Deterministic 1-D CNN engine.
//!
//! Tensors are `batch × length × channels`, channels-last. Parameters of a
//! [`Model`] live in one flat vector so Adam and checkpoints see a single
//! buffer.

mod adam;
pub mod layers;
mod model;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{
    argmax_rows, BatchStats, LayerSpec, Mode, Model, ModelSpec, RunningStats, Tape, BN_EPS, BN_MOMENTUM, L2_DEFAULT,
    SE_REDUCTION,
};
pub use tensor::Tensor;
