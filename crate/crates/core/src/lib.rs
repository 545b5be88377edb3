//! Sequence classification with multi-scale convolutional front ends and
//! densely connected GRU stacks, built on a small reverse-mode autodiff core,
//! plus the EEG preparation pipeline (EDF ingestion, bipolar montage,
//! resampling, windowing, normalization) and training harness.

pub mod arch;
mod bytes;
pub mod data;
pub mod error;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Prng, Scalar, Tensor, Var};
