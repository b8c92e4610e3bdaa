//! Small CPU neural-network toolkit: dense tensors, a reverse-mode tape,
//! convolution kernels, a handful of layers and Adam.
//!
//! Everything runs in `f32` on a single thread and is bit-reproducible for
//! fixed inputs, which the training code relies on for its determinism
//! guarantees.

#![allow(clippy::should_implement_trait)]

pub mod kernels;
pub mod layers;
mod ops;
pub mod optim;
pub mod params;
mod tape;
pub mod tensor;

pub use kernels::ConvGeom;
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Stable `ln(1 + e^x)`.
pub fn softplus(x: f32) -> f32 {
    ops::softplus(x)
}

pub fn sigmoid(x: f32) -> f32 {
    ops::sigmoid(x)
}
