use super::config::{ModelConfig, Readout};
use crate::error::{Error, Result};
use crate::nn::{
    dense_gru_forward, inception_conv1d_forward, linear_forward, ConvVars, DenseGruStack,
    DenseGruVars, GruVars, InceptionConvBlock, InceptionVars, Linear, LinearVars, Parameters,
};
use crate::tensor::{Graph, Prng, Scalar, Tensor, Var};

/// A built network: convolutional stage, recurrent stage, linear readout.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    conv: Vec<InceptionConvBlock<T>>,
    stack: DenseGruStack<T>,
    readout: Linear<T>,
}

/// Graph handles for every parameter of a [`Model`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub conv: Vec<InceptionVars>,
    pub stack: DenseGruVars,
    pub readout: LinearVars,
    /// All handles in canonical parameter order.
    pub params: Vec<Var>,
}

/// Intermediate shapes observed during a forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardTrace {
    /// `(channels, length)` after each convolutional block.
    pub conv_outputs: Vec<(usize, usize)>,
    /// Width of the sequence actually fed to each GRU layer.
    pub gru_inputs: Vec<usize>,
    pub logits: Vec<usize>,
}

impl<T: Scalar> Model<T> {
    /// Validates `config` and initializes every stage from `prng`.
    pub fn build(config: &ModelConfig, prng: &mut Prng) -> Result<Self> {
        config.validate()?;
        Self::build_relaxed(config, prng)
    }

    /// Like [`Model::build`] but skips the per-family kernel-count rule, so
    /// degenerate variants (e.g. a multi-kernel family with one kernel) can
    /// be constructed for comparisons.
    pub fn build_relaxed(config: &ModelConfig, prng: &mut Prng) -> Result<Self> {
        config.validate_structure()?;
        let mut conv = Vec::with_capacity(config.conv_blocks.len());
        let mut c_in = config.input_channels;
        for spec in &config.conv_blocks {
            let block = InceptionConvBlock::init(
                c_in,
                &spec.kernel_lengths,
                spec.filters_per_kernel,
                spec.stride,
                prng,
            )?;
            c_in = block.out_channels();
            conv.push(block);
        }
        let stack = DenseGruStack::init(c_in, &config.gru_widths, config.dense_wiring(), prng)?;
        let readout = Linear::init(config.readout_width(), config.num_classes, prng);
        Ok(Model {
            config: config.clone(),
            conv,
            stack,
            readout,
        })
    }

    /// Rebuilds a model from named tensors in canonical order, checking every
    /// name and shape.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut model = Self::build_relaxed(config, &mut Prng::new(0))?;
        let expected: Vec<(String, Vec<usize>)> = model
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != tensors.len() {
            return Err(Error::data(format!(
                "model expects {} parameter tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, shape), (got_name, got)) in expected.iter().zip(&tensors) {
            if name != got_name || shape.as_slice() != got.shape() {
                return Err(Error::data(format!(
                    "parameter `{got_name}` {:?} does not match expected `{name}` {shape:?}",
                    got.shape()
                )));
            }
        }
        for (slot, (_, t)) in model.tensors_mut().into_iter().zip(tensors) {
            *slot = t;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn conv_blocks(&self) -> &[InceptionConvBlock<T>] {
        &self.conv
    }

    pub fn gru_stack(&self) -> &DenseGruStack<T> {
        &self.stack
    }

    pub fn readout(&self) -> &Linear<T> {
        &self.readout
    }

    pub fn readout_mut(&mut self) -> &mut Linear<T> {
        &mut self.readout
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let tensors = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.cast::<U>()))
            .collect();
        Model::from_tensors(&self.config, tensors).expect("cast preserves structure")
    }

    /// Registers every parameter on `g` as a gradient-receiving leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> ModelVars {
        let flat: Vec<Var> = self
            .named_tensors()
            .into_iter()
            .map(|(_, t)| g.param(t.clone()))
            .collect();
        self.vars_from(flat).expect("canonical order matches structure")
    }

    /// Arranges externally created handles (canonical order) into the
    /// model's structure.
    pub fn vars_from(&self, flat: Vec<Var>) -> Result<ModelVars> {
        let expected = self.named_tensors().len();
        if flat.len() != expected {
            return Err(Error::contract(format!(
                "model has {expected} parameter tensors, {} handles supplied",
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        let mut next = || it.next().expect("length checked");
        let conv = self
            .conv
            .iter()
            .map(|block| InceptionVars {
                branches: block
                    .branches()
                    .iter()
                    .map(|b| ConvVars {
                        kernel: next(),
                        bias: next(),
                        stride: b.stride,
                    })
                    .collect(),
            })
            .collect();
        let layers = self
            .stack
            .layers()
            .iter()
            .map(|_| GruVars {
                w_z: next(),
                w_r: next(),
                w_h: next(),
                u_z: next(),
                u_r: next(),
                u_h: next(),
                b_z: next(),
                b_r: next(),
                b_h: next(),
            })
            .collect();
        let stack = DenseGruVars {
            layers,
            dense: self.stack.is_dense(),
        };
        let readout = LinearVars {
            weight: next(),
            bias: next(),
        };
        Ok(ModelVars {
            conv,
            stack,
            readout,
            params: flat,
        })
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 3 {
            return Err(Error::shape(format!(
                "model input must be [batch × channels × time], got {shape:?}"
            )));
        }
        if shape[1] != self.config.input_channels {
            return Err(Error::shape(format!(
                "input has {} channels but the model expects {}",
                shape[1], self.config.input_channels
            )));
        }
        Ok(())
    }

    /// Logits `[B × num_classes]` for `x [B × C × T]` on the graph.
    pub fn forward_graph(&self, g: &mut Graph<T>, vars: &ModelVars, x: Var) -> Result<Var> {
        self.forward_traced(g, vars, x).map(|(y, _)| y)
    }

    pub fn forward_traced(
        &self,
        g: &mut Graph<T>,
        vars: &ModelVars,
        x: Var,
    ) -> Result<(Var, ForwardTrace)> {
        self.check_input(g.shape(x))?;
        let mut h = x;
        let mut conv_outputs = Vec::with_capacity(vars.conv.len());
        for block in &vars.conv {
            h = inception_conv1d_forward(g, block, h)?;
            let s = g.shape(h);
            conv_outputs.push((s[1], s[2]));
        }
        let gru_inputs = vars
            .stack
            .layers
            .iter()
            .map(|l| g.shape(l.w_z)[1])
            .collect();
        let out = dense_gru_forward(g, &vars.stack, h)?;
        let t_last = g.shape(out.last)[2] - 1;
        let features = match self.config.readout {
            Readout::Last => g.select(out.last, 2, t_last)?,
            Readout::AllLayers => {
                let finals = out
                    .layers
                    .iter()
                    .map(|&l| g.select(l, 2, t_last))
                    .collect::<Result<Vec<_>>>()?;
                g.concat(&finals, 1)?
            }
        };
        let logits = linear_forward(g, &vars.readout, features)?;
        let trace = ForwardTrace {
            conv_outputs,
            gru_inputs,
            logits: g.shape(logits).to_vec(),
        };
        Ok((logits, trace))
    }

    /// Eager forward pass returning logits.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = self.forward_graph(&mut g, &vars, xv)?;
        Ok(g.value(y).clone())
    }

    /// Eager forward pass that also reports intermediate shapes.
    pub fn trace(&self, x: &Tensor<T>) -> Result<ForwardTrace> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let xv = g.constant(x.clone());
        self.forward_traced(&mut g, &vars, xv).map(|(_, t)| t)
    }
}

impl<T: Scalar> Parameters<T> for Model<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, block) in self.conv.iter().enumerate() {
            out.extend(
                block
                    .named_tensors()
                    .into_iter()
                    .map(|(n, t)| (format!("conv{i}.{n}"), t)),
            );
        }
        out.extend(self.stack.named_tensors());
        out.extend(
            self.readout
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (format!("readout.{n}"), t)),
        );
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for block in &mut self.conv {
            out.extend(block.tensors_mut());
        }
        out.extend(self.stack.tensors_mut());
        out.extend(self.readout.tensors_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{Architecture, ConvBlockSpec};

    fn small(arch: Architecture) -> ModelConfig {
        let kernels: &[usize] = if arch.multi_kernel() { &[2, 4] } else { &[3] };
        ModelConfig::uniform(arch, 2, 2, kernels, 3, 2, &[4, 5, 3], 2)
    }

    #[test]
    fn closed_form_count_matches_tensors() {
        for arch in Architecture::ALL {
            for cfg in [small(arch), ModelConfig::preset(arch)] {
                let m = Model::<f32>::build(&cfg, &mut Prng::new(3)).unwrap();
                assert_eq!(m.parameter_count(), cfg.parameter_count(), "{arch}");
            }
        }
    }

    #[test]
    fn output_shape_and_trace() {
        let cfg = small(Architecture::Chrononet);
        let m = Model::<f64>::build(&cfg, &mut Prng::new(1)).unwrap();
        let x = Tensor::full(vec![4, 2, 13], 0.2);
        let t = m.trace(&x).unwrap();
        assert_eq!(t.conv_outputs, vec![(6, 7), (6, 4)]);
        assert_eq!(t.gru_inputs, vec![6, 4, 9]);
        assert_eq!(t.logits, vec![4, 2]);
    }

    #[test]
    fn zero_readout_gives_zero_logits() {
        let mut m = Model::<f64>::build(&small(Architecture::Crnn), &mut Prng::new(1)).unwrap();
        m.readout_mut().weight.data_mut().fill(0.0);
        let y = m.forward(&Tensor::full(vec![3, 2, 9], 1.0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_names_both() {
        let m = Model::<f64>::build(&small(Architecture::Crnn), &mut Prng::new(1)).unwrap();
        match m.forward(&Tensor::zeros(vec![1, 5, 9])) {
            Err(Error::Shape(msg)) => assert!(msg.contains('5') && msg.contains('2'), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn from_tensors_round_trip() {
        let cfg = small(Architecture::Cdrnn);
        let m = Model::<f32>::build(&cfg, &mut Prng::new(9)).unwrap();
        let copy = Model::from_tensors(
            &cfg,
            m.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        )
        .unwrap();
        assert_eq!(copy, m);
        let mut bad: Vec<_> = m.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        bad.swap(0, 1);
        assert!(Model::from_tensors(&cfg, bad).is_err());
    }

    #[test]
    fn all_layers_readout_width() {
        let mut cfg = small(Architecture::Icrnn);
        cfg.readout = Readout::AllLayers;
        let m = Model::<f64>::build(&cfg, &mut Prng::new(2)).unwrap();
        assert_eq!(m.readout().input(), 12);
        assert_eq!(m.forward(&Tensor::full(vec![2, 2, 8], 0.1)).unwrap().shape(), &[2, 2]);
        assert_eq!(m.parameter_count(), cfg.parameter_count());
    }

    #[test]
    fn doubling_filters_doubles_kernel_parameters() {
        let mut cfg = small(Architecture::Icrnn);
        cfg.conv_blocks.truncate(1);
        let one = Model::<f32>::build(&cfg, &mut Prng::new(0)).unwrap();
        cfg.conv_blocks[0] = ConvBlockSpec::new(vec![2, 4], 6, 2);
        let two = Model::<f32>::build(&cfg, &mut Prng::new(0)).unwrap();
        let kernels = |m: &Model<f32>| -> usize {
            m.conv_blocks()[0].branches().iter().map(|b| b.kernel.numel()).sum()
        };
        assert_eq!(kernels(&two), 2 * kernels(&one));
    }
}
