use super::gru::{gru_layer_forward, GruParams, GruVars};
use super::Parameters;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Prng, Scalar, Tensor, Var};

/// Where a GRU layer's input comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    /// The sequence entering the stack (the convolutional front end).
    External,
    /// Hidden sequence of GRU layer `i` (0-based).
    Layer(usize),
}

/// Stack of GRU layers.
///
/// With dense wiring, layer 0 reads the external sequence and layer `k > 0`
/// reads the channel concatenation of the hidden sequences of layers
/// `0..k`. Without it, each layer reads only its predecessor.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGruStack<T> {
    layers: Vec<GruParams<T>>,
    dense: bool,
}

#[derive(Clone, Debug)]
pub struct DenseGruVars {
    pub layers: Vec<GruVars>,
    pub dense: bool,
}

/// Input width that layer `k` must declare under the given wiring.
pub(crate) fn wired_input_width(input: usize, widths: &[usize], k: usize, dense: bool) -> usize {
    match (k, dense) {
        (0, _) => input,
        (_, true) => widths[..k].iter().sum(),
        (_, false) => widths[k - 1],
    }
}

impl<T: Scalar> DenseGruStack<T> {
    pub fn new(layers: Vec<GruParams<T>>, dense: bool, input_width: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("gru_widths", "stack needs at least one layer"));
        }
        let widths: Vec<usize> = layers.iter().map(GruParams::hidden).collect();
        for (k, layer) in layers.iter().enumerate() {
            layer.validate()?;
            let expect = wired_input_width(input_width, &widths, k, dense);
            if layer.input() != expect {
                return Err(Error::config(
                    "gru_widths",
                    format!(
                        "layer {k} declares input width {} but its wiring supplies {expect}",
                        layer.input()
                    ),
                ));
            }
        }
        Ok(DenseGruStack { layers, dense })
    }

    pub fn init(input_width: usize, widths: &[usize], dense: bool, prng: &mut Prng) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::config("gru_widths", "widths must be non-empty and positive"));
        }
        let layers = (0..widths.len())
            .map(|k| {
                GruParams::init(wired_input_width(input_width, widths, k, dense), widths[k], prng)
            })
            .collect();
        Self::new(layers, dense, input_width)
    }

    pub fn layers(&self) -> &[GruParams<T>] {
        &self.layers
    }

    pub fn is_dense(&self) -> bool {
        self.dense
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(GruParams::hidden).unwrap_or(0)
    }

    /// Declared input width of each layer.
    pub fn input_widths(&self) -> Vec<usize> {
        self.layers.iter().map(GruParams::input).collect()
    }

    /// Every (source → layer) edge of the wiring.
    pub fn connections(&self) -> Vec<(Source, usize)> {
        let mut edges = vec![(Source::External, 0)];
        for k in 1..self.layers.len() {
            if self.dense {
                edges.extend((0..k).map(|j| (Source::Layer(j), k)));
            } else {
                edges.push((Source::Layer(k - 1), k));
            }
        }
        edges
    }

    pub fn bind(&self, g: &mut Graph<T>) -> DenseGruVars {
        DenseGruVars {
            layers: self.layers.iter().map(|l| l.bind(g)).collect(),
            dense: self.dense,
        }
    }

    pub fn forward(&self, seq: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let x = g.constant(seq.clone());
        let y = dense_gru_forward(&mut g, &p, x)?;
        Ok(g.value(y.last).clone())
    }
}

impl<T: Scalar> Parameters<T> for DenseGruStack<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.named_tensors()
                    .into_iter()
                    .map(move |(n, t)| (format!("gru{i}.{n}"), t))
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// Hidden sequences of every layer of a stack forward pass.
#[derive(Clone, Debug)]
pub struct StackOutput {
    pub layers: Vec<Var>,
    pub last: Var,
}

pub fn dense_gru_forward<T: Scalar>(
    g: &mut Graph<T>,
    stack: &DenseGruVars,
    seq: Var,
) -> Result<StackOutput> {
    let mut outputs: Vec<Var> = Vec::with_capacity(stack.layers.len());
    for (k, layer) in stack.layers.iter().enumerate() {
        let input = match (k, stack.dense) {
            (0, _) => seq,
            (1, _) | (_, false) => outputs[k - 1],
            (_, true) => g.concat(&outputs, 1)?,
        };
        let declared = g.shape(layer.w_z)[1];
        let supplied = g.shape(input)[1];
        if declared != supplied {
            return Err(Error::config(
                "gru_widths",
                format!("layer {k} declares input width {declared} but wiring supplies {supplied}"),
            ));
        }
        outputs.push(gru_layer_forward(g, layer, input)?);
    }
    let last = *outputs.last().ok_or_else(|| Error::config("gru_widths", "empty stack"))?;
    Ok(StackOutput {
        layers: outputs,
        last,
    })
}
