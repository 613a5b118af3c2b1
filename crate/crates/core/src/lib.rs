//! Post-training quantization at desk scale.
//!
//! The crate covers the full PTQ pipeline for small sequential
//! convolutional classifiers: a dense tensor core, a minimal model graph
//! with training and batch-norm fusion, six weight rounding functions
//! (nearest/floor/ceil/stochastic, AdaRound, and the attention rounder
//! with its erf-gated gradient), layer-wise reconstruction calibration,
//! a coding-length mixed-precision bit allocator, and model/dataset
//! persistence.

pub mod calib;
pub mod coding;
pub mod error;
pub mod graph;
pub mod io;
pub mod quant;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Rng, Tensor};
