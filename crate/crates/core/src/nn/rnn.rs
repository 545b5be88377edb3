use super::{bind_all, glorot_uniform, Parameters};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Prng, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
}

/// Classical recurrent cell `h_t = f(W x_t + U h_{t-1} + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams<T> {
    /// `[hidden × input]`
    pub w: Tensor<T>,
    /// `[hidden × hidden]`
    pub u: Tensor<T>,
    /// `[hidden]`
    pub b: Tensor<T>,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug)]
pub struct RnnVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
    pub activation: Activation,
}

impl<T: Scalar> RnnParams<T> {
    pub fn new(w: Tensor<T>, u: Tensor<T>, b: Tensor<T>, activation: Activation) -> Result<Self> {
        let hidden = b.numel();
        let ok = b.rank() == 1
            && w.rank() == 2
            && u.shape() == [hidden, hidden]
            && w.shape()[0] == hidden;
        if !ok {
            return Err(Error::shape(format!(
                "rnn params W {:?}, U {:?}, b {:?}",
                w.shape(),
                u.shape(),
                b.shape()
            )));
        }
        Ok(RnnParams { w, u, b, activation })
    }

    pub fn init(input: usize, hidden: usize, activation: Activation, prng: &mut Prng) -> Self {
        RnnParams {
            w: glorot_uniform(&[hidden, input], input, hidden, prng),
            u: glorot_uniform(&[hidden, hidden], hidden, hidden, prng),
            b: Tensor::zeros(vec![hidden]),
            activation,
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.numel()
    }

    pub fn input(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn bind(&self, g: &mut Graph<T>) -> RnnVars {
        let v = bind_all(self, g);
        RnnVars {
            w: v[0],
            u: v[1],
            b: v[2],
            activation: self.activation,
        }
    }

    /// Eager single step on `[batch × input]` / `[batch × hidden]` tensors.
    pub fn step(&self, x: &Tensor<T>, h_prev: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let x = g.constant(x.clone());
        let h = g.constant(h_prev.clone());
        let out = rnn_step(&mut g, &p, x, h)?;
        Ok(g.value(out).clone())
    }
}

impl<T: Scalar> Parameters<T> for RnnParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("w".into(), &self.w), ("u".into(), &self.u), ("b".into(), &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}

/// One recurrent update on batched row vectors.
pub fn rnn_step<T: Scalar>(g: &mut Graph<T>, p: &RnnVars, x: Var, h_prev: Var) -> Result<Var> {
    let wx = g.linear(x, p.w, Some(p.b))?;
    let uh = g.linear(h_prev, p.u, None)?;
    let pre = g.add(wx, uh)?;
    match p.activation {
        Activation::Tanh => g.tanh(pre),
        Activation::Sigmoid => g.sigmoid(pre),
    }
}
