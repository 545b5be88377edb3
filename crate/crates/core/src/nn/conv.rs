use super::{bind_all, glorot_uniform, Parameters};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Prng, Scalar, Tensor, Var};

/// Strided 1-D convolution followed by ReLU.
///
/// "Same" zero padding: `floor((k-1)/2)` on the left, `ceil((k-1)/2)` on the
/// right, so the output length is `ceil(T / stride)` for every kernel length.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    /// `[out_channels × in_channels × kernel_length]`
    pub kernel: Tensor<T>,
    /// `[out_channels]`
    pub bias: Tensor<T>,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvVars {
    pub kernel: Var,
    pub bias: Var,
    pub stride: usize,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(kernel: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self> {
        if kernel.rank() != 3 || bias.shape() != [kernel.shape()[0]] {
            return Err(Error::shape(format!(
                "conv kernel {:?} with bias {:?}",
                kernel.shape(),
                bias.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        Ok(ConvParams { kernel, bias, stride })
    }

    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel_length: usize,
        stride: usize,
        prng: &mut Prng,
    ) -> Self {
        ConvParams {
            kernel: glorot_uniform(
                &[out_channels, in_channels, kernel_length],
                in_channels * kernel_length,
                out_channels * kernel_length,
                prng,
            ),
            bias: Tensor::zeros(vec![out_channels]),
            stride,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_length(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn output_len(&self, len: usize) -> usize {
        len.div_ceil(self.stride)
    }

    pub fn bind(&self, g: &mut Graph<T>) -> ConvVars {
        let v = bind_all(self, g);
        ConvVars {
            kernel: v[0],
            bias: v[1],
            stride: self.stride,
        }
    }

    pub fn forward(&self, seq: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let x = g.constant(seq.clone());
        let y = conv1d_forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }
}

impl<T: Scalar> Parameters<T> for ConvParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("kernel".into(), &self.kernel), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

/// Convolution plus ReLU on `seq [batch × in × T]`.
pub fn conv1d_forward<T: Scalar>(g: &mut Graph<T>, p: &ConvVars, seq: Var) -> Result<Var> {
    let pre = g.conv1d(seq, p.kernel, p.bias, p.stride)?;
    g.relu(pre)
}

/// Parallel convolutions of different kernel lengths over the same input,
/// concatenated along the channel axis.
#[derive(Clone, Debug, PartialEq)]
pub struct InceptionConvBlock<T> {
    branches: Vec<ConvParams<T>>,
}

#[derive(Clone, Debug)]
pub struct InceptionVars {
    pub branches: Vec<ConvVars>,
}

impl<T: Scalar> InceptionConvBlock<T> {
    pub fn new(branches: Vec<ConvParams<T>>) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| Error::config("kernel_lengths", "a block needs at least one branch"))?;
        if let Some(b) = branches.iter().find(|b| b.stride != first.stride) {
            return Err(Error::config(
                "stride",
                format!("branches disagree on stride ({} vs {})", first.stride, b.stride),
            ));
        }
        if let Some(b) = branches.iter().find(|b| b.in_channels() != first.in_channels()) {
            return Err(Error::config(
                "in_channels",
                format!(
                    "branches disagree on input channels ({} vs {})",
                    first.in_channels(),
                    b.in_channels()
                ),
            ));
        }
        Ok(InceptionConvBlock { branches })
    }

    /// One branch per kernel length, each with `filters` output channels.
    pub fn init(
        in_channels: usize,
        kernel_lengths: &[usize],
        filters: usize,
        stride: usize,
        prng: &mut Prng,
    ) -> Result<Self> {
        Self::new(
            kernel_lengths
                .iter()
                .map(|&k| ConvParams::init(in_channels, filters, k, stride, prng))
                .collect(),
        )
    }

    pub fn branches(&self) -> &[ConvParams<T>] {
        &self.branches
    }

    pub fn stride(&self) -> usize {
        self.branches[0].stride
    }

    pub fn in_channels(&self) -> usize {
        self.branches[0].in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.branches.iter().map(ConvParams::out_channels).sum()
    }

    pub fn output_len(&self, len: usize) -> usize {
        len.div_ceil(self.stride())
    }

    pub fn bind(&self, g: &mut Graph<T>) -> InceptionVars {
        InceptionVars {
            branches: self.branches.iter().map(|b| b.bind(g)).collect(),
        }
    }

    pub fn forward(&self, seq: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let x = g.constant(seq.clone());
        let y = inception_conv1d_forward(&mut g, &p, x)?;
        Ok(g.value(y).clone())
    }
}

impl<T: Scalar> Parameters<T> for InceptionConvBlock<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.branches
            .iter()
            .flat_map(|b| {
                let k = b.kernel_length();
                b.named_tensors()
                    .into_iter()
                    .map(move |(n, t)| (format!("k{k}.{n}"), t))
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.branches.iter_mut().flat_map(|b| b.tensors_mut()).collect()
    }
}

pub fn inception_conv1d_forward<T: Scalar>(
    g: &mut Graph<T>,
    block: &InceptionVars,
    seq: Var,
) -> Result<Var> {
    if let Some(first) = block.branches.first() {
        if block.branches.iter().any(|b| b.stride != first.stride) {
            return Err(Error::config("stride", "inception branches must share stride"));
        }
    }
    let outs = block
        .branches
        .iter()
        .map(|b| conv1d_forward(g, b, seq))
        .collect::<Result<Vec<_>>>()?;
    if outs.len() == 1 {
        return Ok(outs[0]);
    }
    g.concat(&outs, 1)
}
