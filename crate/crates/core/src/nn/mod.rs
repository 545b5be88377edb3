//! Network building blocks: classical RNN cell, GRU cell and layer, strided
//! "same"-padded 1-D convolution, multi-kernel (inception-style) blocks,
//! densely wired GRU stacks and the linear readout.
//!
//! Every parameter bundle owns its tensors and can `bind` them onto a
//! [`Graph`](crate::Graph), yielding a matching bundle of [`Var`](crate::Var)
//! handles. `tensors()` and `bind()` visit parameters in the same order,
//! which is the order used by optimizers and checkpoints.

mod conv;
mod dense;
mod gru;
mod init;
mod linear;
mod rnn;

pub use conv::{
    conv1d_forward, inception_conv1d_forward, ConvParams, ConvVars, InceptionConvBlock,
    InceptionVars,
};
pub use dense::{dense_gru_forward, DenseGruStack, DenseGruVars, Source, StackOutput};
pub(crate) use dense::wired_input_width;
pub use gru::{gru_layer_forward, gru_step, GruParams, GruStep, GruVars};
pub use init::{glorot_bound, glorot_uniform};
pub use linear::{linear_forward, Linear, LinearVars};
pub use rnn::{rnn_step, Activation, RnnParams, RnnVars};

use crate::tensor::{Graph, Scalar, Tensor, Var};

/// Uniform access to the learnable tensors of a parameter bundle.
pub trait Parameters<T: Scalar> {
    /// Named tensors in canonical order.
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)>;

    /// Mutable tensors in the same canonical order.
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Registers every tensor of `params` as a gradient-receiving leaf.
pub(crate) fn bind_all<T: Scalar, P: Parameters<T> + ?Sized>(params: &P, g: &mut Graph<T>) -> Vec<Var> {
    params
        .named_tensors()
        .into_iter()
        .map(|(_, t)| g.param(t.clone()))
        .collect()
}
