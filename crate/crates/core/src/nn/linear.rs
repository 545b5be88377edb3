use super::{bind_all, glorot_uniform, Parameters};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Prng, Scalar, Tensor, Var};

/// Affine readout `W x + b`, `W` is `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl<T: Scalar> Linear<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape(format!(
                "linear weight {:?} with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Linear { weight, bias })
    }

    pub fn init(input: usize, output: usize, prng: &mut Prng) -> Self {
        Linear {
            weight: glorot_uniform(&[output, input], input, output, prng),
            bias: Tensor::zeros(vec![output]),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn bind(&self, g: &mut Graph<T>) -> LinearVars {
        let v = bind_all(self, g);
        LinearVars {
            weight: v[0],
            bias: v[1],
        }
    }

    /// Eager `W x + b` on a single vector.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let x = g.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
        let y = linear_forward(&mut g, &p, x)?;
        Ok(g.value(y).data().to_vec())
    }
}

impl<T: Scalar> Parameters<T> for Linear<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Rows of `x [batch × in]` mapped to `[batch × out]`.
pub fn linear_forward<T: Scalar>(g: &mut Graph<T>, p: &LinearVars, x: Var) -> Result<Var> {
    g.linear(x, p.weight, Some(p.bias))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight() {
        let l = Linear::new(
            Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(vec![3]),
        )
        .unwrap();
        assert_eq!(l.apply(&[0.5, -2.0, 7.0]).unwrap(), vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn readout_parameter_count() {
        let l = Linear::<f32>::init(96, 2, &mut Prng::new(0));
        assert_eq!(l.parameter_count(), 194);
        assert!(l.bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn random_case_matches_loops() {
        let mut prng = Prng::new(12);
        let l = Linear::<f64>::init(5, 4, &mut prng);
        let x: Vec<f64> = (0..5).map(|_| prng.normal()).collect();
        let y = l.apply(&x).unwrap();
        for i in 0..4 {
            let mut acc = l.bias.data()[i];
            for j in 0..5 {
                acc += l.weight.data()[i * 5 + j] * x[j];
            }
            assert!((y[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_width() {
        let l = Linear::<f64>::init(5, 4, &mut Prng::new(0));
        assert!(matches!(l.apply(&[1.0, 2.0]), Err(Error::Shape(_))));
    }
}
