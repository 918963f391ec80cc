//! A small, deterministic CNN engine for 1-d and 2-d inputs.
//!
//! Tensors are batch-first and contiguous. Every layer keeps what it needs
//! from the forward pass and exposes a hand-written backward pass; there is no
//! general autodiff tape. Both `f32` (training) and `f64` (gradient checks)
//! are supported through [`Scalar`].

pub mod adam;
pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
mod scalar;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{NnError, Result};
pub use layers::{Layer, LayerSpec};
pub use model::{Arch, Mode, Sequential, Spatial};
pub use scalar::Scalar;
pub use tensor::Tensor;
