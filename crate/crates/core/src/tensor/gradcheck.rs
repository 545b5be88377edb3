//! Central finite-difference verification of graph gradients in 64-bit.

use super::{Graph, OpTag, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
    /// Denominator floor of the relative error, so entries that are zero in
    /// both routes do not divide by zero.
    pub floor: f64,
    /// Corrupts the analytic backward of one op kind (negative control).
    pub fault: Option<OpTag>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            fault: None,
        }
    }
}

/// Result for one named parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

/// Relative error used throughout: `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the reverse-mode gradient of `loss_fn` with respect to every
/// input block against central differences.
///
/// `loss_fn` receives the graph and one [`Var`] per entry of `inputs`, and
/// must return a single-element loss.
pub fn check_gradients<F>(
    inputs: &[(String, Tensor<f64>)],
    loss_fn: F,
    opts: &GradCheckOptions,
) -> Result<Vec<BlockReport>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let loss = loss_fn(&mut g, &vars)?;
        g.value(loss).item()
    };

    let mut g = Graph::new();
    if let Some(tag) = opts.fault {
        g.inject_backward_fault(tag);
    }
    let vars: Vec<Var> = inputs.iter().map(|(_, t)| g.param(t.clone())).collect();
    let loss = loss_fn(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut values: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut reports = Vec::with_capacity(inputs.len());
    for (block, (name, tensor)) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[block])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tensor.shape().to_vec()));
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for i in 0..tensor.numel() {
            let orig = tensor.data()[i];
            values[block].data_mut()[i] = orig + opts.step;
            let plus = eval(&values)?;
            values[block].data_mut()[i] = orig - opts.step;
            let minus = eval(&values)?;
            values[block].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[i];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::NonFinite(format!("gradient of block `{name}`")));
            }
            max_rel = max_rel.max(relative_error(a, numeric, opts.floor));
            max_abs = max_abs.max((a - numeric).abs());
        }
        reports.push(BlockReport {
            name: name.clone(),
            elements: tensor.numel(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel <= opts.tolerance,
        });
    }
    Ok(reports)
}
