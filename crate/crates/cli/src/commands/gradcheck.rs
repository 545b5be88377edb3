use std::io::Write;

use chrononet::arch::{Architecture, Model, ModelConfig, Precision};
use chrononet::nn::{
    conv1d_forward, dense_gru_forward, gru_layer_forward, inception_conv1d_forward, linear_forward, ConvParams,
    ConvVars, DenseGruStack, DenseGruVars, GruParams, GruVars, InceptionConvBlock, InceptionVars, Linear,
    LinearVars, Parameters,
};
use chrononet::tensor::gradcheck::{check_gradients, BlockReport, GradCheckOptions};
use chrononet::tensor::OpTag;
use chrononet::{Graph, Prng, Result, Tensor, Var};

use crate::error::{CliError, CliResult};
use crate::GradcheckArgs;

const BATCH: usize = 2;
const CHANNELS: usize = 2;
const STEPS: usize = 12;

/// Reports of one layer kind.
#[derive(Clone, Debug)]
pub struct LayerReport {
    pub layer: String,
    pub blocks: Vec<BlockReport>,
}

impl LayerReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }
}

fn random(shape: &[usize], prng: &mut Prng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| prng.normal()).collect()).expect("shape matches data")
}

fn named<P: Parameters<f64>>(input: &Tensor<f64>, p: &P) -> Vec<(String, Tensor<f64>)> {
    let mut v = vec![("input".to_string(), input.clone())];
    v.extend(p.named_tensors().into_iter().map(|(n, t)| (n, t.clone())));
    v
}

/// `sum(y ⊙ R)` with a fixed random `R`, so every output element carries
/// gradient.
struct Projection(Vec<Tensor<f64>>);

impl Projection {
    fn new(shapes: &[Vec<usize>], prng: &mut Prng) -> Self {
        Projection(shapes.iter().map(|s| random(s, prng)).collect())
    }

    fn apply(&self, g: &mut Graph<f64>, outs: &[Var]) -> Result<Var> {
        let mut total: Option<Var> = None;
        for (y, r) in outs.iter().zip(&self.0) {
            let r = g.constant(r.clone());
            let m = g.mul(*y, r)?;
            let s = g.sum(m)?;
            total = Some(match total {
                Some(t) => g.add(t, s)?,
                None => s,
            });
        }
        Ok(total.expect("at least one output"))
    }
}

fn conv_vars(v: &[Var], stride: usize) -> ConvVars {
    ConvVars {
        kernel: v[0],
        bias: v[1],
        stride,
    }
}

fn gru_vars(v: &[Var]) -> GruVars {
    GruVars {
        w_z: v[0],
        w_r: v[1],
        w_h: v[2],
        u_z: v[3],
        u_r: v[4],
        u_h: v[5],
        b_z: v[6],
        b_r: v[7],
        b_h: v[8],
    }
}

/// Toy end-to-end network: two multi-kernel blocks and a dense stack of
/// four narrow GRU layers.
pub fn composite_config() -> ModelConfig {
    let mut cfg = ModelConfig::uniform(Architecture::Chrononet, CHANNELS, 2, &[2, 4, 8], 2, 2, &[3, 3, 3, 3], 2);
    cfg.precision = Precision::Check;
    cfg
}

/// Finite-difference check of every layer kind and of the composite
/// network, all in 64-bit.
pub fn gradient_suite(seed: u64, opts: &GradCheckOptions) -> Result<Vec<LayerReport>> {
    let mut prng = Prng::new(seed);
    let x = random(&[BATCH, CHANNELS, STEPS], &mut prng);
    let mut reports = Vec::new();
    let mut push = |layer: &str, blocks: Vec<BlockReport>| {
        reports.push(LayerReport {
            layer: layer.to_string(),
            blocks,
        })
    };

    let conv = ConvParams::<f64>::init(CHANNELS, 3, 4, 2, &mut prng);
    let proj = Projection::new(&[vec![BATCH, 3, STEPS / 2]], &mut prng);
    push(
        "conv1d",
        check_gradients(
            &named(&x, &conv),
            |g, v| {
                let y = conv1d_forward(g, &conv_vars(&v[1..], 2), v[0])?;
                proj.apply(g, &[y])
            },
            opts,
        )?,
    );

    let block = InceptionConvBlock::<f64>::init(CHANNELS, &[2, 4, 8], 2, 2, &mut prng)?;
    let proj = Projection::new(&[vec![BATCH, 6, STEPS / 2]], &mut prng);
    push(
        "inception(2,4,8)",
        check_gradients(
            &named(&x, &block),
            |g, v| {
                let p = InceptionVars {
                    branches: v[1..].chunks(2).map(|c| conv_vars(c, 2)).collect(),
                };
                let y = inception_conv1d_forward(g, &p, v[0])?;
                proj.apply(g, &[y])
            },
            opts,
        )?,
    );

    let gru = GruParams::<f64>::init(CHANNELS, 3, &mut prng);
    let proj = Projection::new(&[vec![BATCH, 3, STEPS]], &mut prng);
    push(
        "gru_layer",
        check_gradients(
            &named(&x, &gru),
            |g, v| {
                let y = gru_layer_forward(g, &gru_vars(&v[1..]), v[0])?;
                proj.apply(g, &[y])
            },
            opts,
        )?,
    );

    let stack = DenseGruStack::<f64>::init(CHANNELS, &[3, 3, 3], true, &mut prng)?;
    let proj = Projection::new(&vec![vec![BATCH, 3, STEPS]; 3], &mut prng);
    push(
        "dense_gru_stack(L=3)",
        check_gradients(
            &named(&x, &stack),
            |g, v| {
                let p = DenseGruVars {
                    layers: v[1..].chunks(9).map(gru_vars).collect(),
                    dense: true,
                };
                let y = dense_gru_forward(g, &p, v[0])?;
                proj.apply(g, &y.layers)
            },
            opts,
        )?,
    );

    let lin = Linear::<f64>::init(4, 3, &mut prng);
    let xl = random(&[BATCH, 4], &mut prng);
    let proj = Projection::new(&[vec![BATCH, 3]], &mut prng);
    push(
        "linear",
        check_gradients(
            &named(&xl, &lin),
            |g, v| {
                let p = LinearVars {
                    weight: v[1],
                    bias: v[2],
                };
                let y = linear_forward(g, &p, v[0])?;
                proj.apply(g, &[y])
            },
            opts,
        )?,
    );

    let model = Model::<f64>::build(&composite_config(), &mut prng)?;
    let labels: Vec<usize> = (0..BATCH).map(|i| i % 2).collect();
    push(
        "chrononet",
        check_gradients(
            &named(&x, &model),
            |g, v| {
                let vars = model.vars_from(v[1..].to_vec())?;
                let logits = model.forward_graph(g, &vars, v[0])?;
                g.softmax_cross_entropy(logits, &labels)
            },
            opts,
        )?,
    );
    Ok(reports)
}

pub fn table(reports: &[LayerReport]) -> String {
    let mut s = format!(
        "{:<22} {:<22} {:>8} {:>12} {:>12}  status\n",
        "layer", "block", "elements", "max_rel_err", "max_abs_err"
    );
    for r in reports {
        for b in &r.blocks {
            s.push_str(&format!(
                "{:<22} {:<22} {:>8} {:>12.3e} {:>12.3e}  {}\n",
                r.layer,
                b.name,
                b.elements,
                b.max_rel_error,
                b.max_abs_error,
                if b.passed { "ok" } else { "FAIL" }
            ));
        }
    }
    s
}

pub fn run(a: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    let fault = match &a.fault {
        Some(name) => Some(name.parse::<OpTag>()?),
        None => None,
    };
    let opts = GradCheckOptions {
        tolerance: a.tolerance,
        fault,
        ..GradCheckOptions::default()
    };
    let reports = gradient_suite(a.seed, &opts)?;
    let _ = write!(out, "{}", table(&reports));
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.layer.as_str())
        .collect();
    if failed.is_empty() {
        let _ = writeln!(out, "all {} layers within {:e}", reports.len(), a.tolerance);
        Ok(())
    } else {
        Err(CliError::gradcheck(format!("gradient check failed for: {}", failed.join(", "))))
    }
}
