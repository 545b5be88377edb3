//! Model configuration schema and builders for the four network families.

mod config;
mod model;

pub use config::{
    key_values, Architecture, ConvBlockSpec, ModelConfig, Precision, Readout, DEFAULT_BLOCKS,
    DEFAULT_FILTERS, DEFAULT_GRU_WIDTHS, DEFAULT_INPUT_CHANNELS, DEFAULT_KERNELS,
    DEFAULT_SINGLE_KERNEL, DEFAULT_STRIDE,
};
pub use model::{ForwardTrace, Model, ModelVars};
