//! Masked vector quantization for convolution weights.
//!
//! Weights are grouped into output-channel subvectors, pruned to an N:M
//! pattern, clustered with a k-means that only scores kept positions, and
//! stored as packed assignments, mask ids and a quantized codebook. The
//! [`accel`] module models a weight-stationary systolic accelerator that
//! consumes this format.

pub mod accel;
pub mod clustering;
pub mod codec;
pub mod error;
pub mod finetune;
pub mod io;
pub mod pipeline;
pub mod quantization;
pub mod sparsity;
pub mod tensor;

pub use error::{Error, Result};
