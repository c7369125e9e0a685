//! Uncertainty quantification and instability detection for learned
//! image reconstruction.
//!
//! The crate provides:
//!
//! - a small f64 tensor/layer engine with reverse-mode gradients
//!   ([`tensor`], [`nn`]),
//! - interval-arithmetic networks producing per-pixel prediction bounds
//!   ([`interval`]),
//! - Monte-Carlo dropout and mean/variance (two-headed) uncertainty
//!   baselines ([`uq`]),
//! - forward operators for denoising and limited-angle tomography with
//!   filtered backprojection, plus synthetic data ([`operators`]),
//! - adversarial input construction under box constraints ([`attacks`]),
//! - out-of-distribution test inputs with ground-truth masks ([`ood`]),
//! - Pearson-correlation detection scoring and aggregation
//!   ([`evaluation`]),
//! - end-to-end experiment orchestration ([`config`], [`pipeline`],
//!   [`render`]).

pub mod attacks;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod interval;
pub mod nn;
pub mod ood;
pub mod operators;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod tensor;
pub mod uq;

pub use error::{Error, Result};
pub use tensor::Tensor;
