//! Vector quantization toolkit built around smoothed quantizers on the
//! probability simplex.
//!
//! The crate is organised in four layers:
//!
//! - [`grad`]: a small reverse-mode autodiff tape over dense `f64` tensors,
//!   an AdamW optimizer and a central-difference gradient checker.
//! - [`quantize`]: codebooks and the five quantization pathways (hard with a
//!   straight-through or rotation estimator, softmax, soft and hard
//!   Gumbel-softmax) plus product quantization.
//! - [`regularize`]: commitment/codebook loss, normalized-perplexity loss and
//!   the KNN-to-vertex loss that pulls the nearest smoothed quantizers of
//!   every simplex vertex towards that vertex.
//! - [`diagnostics`]: codebook usage, onehotness, mean perplexity and simplex
//!   scatter export.

pub mod diagnostics;
mod error;
pub mod grad;
pub mod quantize;
pub mod regularize;
pub mod simplex;

pub use error::{Error, Result};
pub use grad::{Gradients, Tape, Tensor, Var};
