//! Masked image modeling with local multi-scale reconstruction.
//!
//! Intermediate encoder layers each reconstruct supervision signals of a
//! matched scale through tiny decoders: lower layers predict fine-scale
//! targets, upper layers coarse-scale ones, and the training objective is a
//! weighted sum of the per-layer masked reconstruction losses. The crate
//! contains the full desk-scale stack: a dense tensor engine with
//! reverse-mode differentiation, image and mask plumbing, pixel and HOG
//! target descriptors, columnar and pyramid visible-only encoders, per-tap
//! decoders, the trainer with its ablation modes, and the attention/gradient
//! diagnostics.

pub mod data;
pub mod decoder;
pub mod descriptor;
pub mod diag;
pub mod encoder;
pub mod error;
pub mod io;
pub mod rng;
pub mod tensor;
pub mod train;
mod util;

pub use error::{Error, Result};
pub use rng::Prng;
pub use tensor::{backward, DType, Gradients, ParamStore, Scalar, Tensor};
