use super::{bind_all, glorot_uniform, Parameters};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Prng, Scalar, Tensor, Var};

/// Gated recurrent unit parameters.
///
/// Input weights are `[hidden × input]`, recurrent weights `[hidden × hidden]`,
/// biases `[hidden]`. Gates use the logistic sigmoid, the candidate uses tanh.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams<T> {
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_h: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
}

/// Outputs of one GRU update; gates are exposed for inspection.
#[derive(Clone, Copy, Debug)]
pub struct GruStep<V> {
    pub h: V,
    pub z: V,
    pub r: V,
    pub candidate: V,
}

impl<T: Scalar> GruParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(vec![hidden, input]);
        let u = || Tensor::zeros(vec![hidden, hidden]);
        let b = || Tensor::zeros(vec![hidden]);
        GruParams {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden: usize, prng: &mut Prng) -> Self {
        let mut p = Self::zeros(input, hidden);
        for w in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
            *w = glorot_uniform(&[hidden, input], input, hidden, prng);
        }
        for u in [&mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *u = glorot_uniform(&[hidden, hidden], hidden, hidden, prng);
        }
        p
    }

    pub fn input(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.b_z.numel()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden(), self.input());
        let ok = [&self.w_z, &self.w_r, &self.w_h].iter().all(|w| w.shape() == [h, i])
            && [&self.u_z, &self.u_r, &self.u_h].iter().all(|u| u.shape() == [h, h])
            && [&self.b_z, &self.b_r, &self.b_h].iter().all(|b| b.shape() == [h]);
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "inconsistent GRU parameter shapes for hidden {h}, input {i}"
            )))
        }
    }

    pub fn bind(&self, g: &mut Graph<T>) -> GruVars {
        let v = bind_all(self, g);
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

    /// Eager single step on `[batch × input]` and `[batch × hidden]` tensors.
    pub fn step(&self, x: &Tensor<T>, h_prev: &Tensor<T>) -> Result<GruStep<Tensor<T>>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let x = g.constant(x.clone());
        let h = g.constant(h_prev.clone());
        let s = gru_step(&mut g, &p, x, h)?;
        Ok(GruStep {
            h: g.value(s.h).clone(),
            z: g.value(s.z).clone(),
            r: g.value(s.r).clone(),
            candidate: g.value(s.candidate).clone(),
        })
    }

    /// Eager full-sequence forward on `[batch × input × T]`.
    pub fn forward(&self, seq: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let x = g.constant(seq.clone());
        let out = gru_layer_forward(&mut g, &p, x)?;
        Ok(g.value(out).clone())
    }
}

impl<T: Scalar> Parameters<T> for GruParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("w_z".into(), &self.w_z),
            ("w_r".into(), &self.w_r),
            ("w_h".into(), &self.w_h),
            ("u_z".into(), &self.u_z),
            ("u_r".into(), &self.u_r),
            ("u_h".into(), &self.u_h),
            ("b_z".into(), &self.b_z),
            ("b_r".into(), &self.b_r),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

/// One GRU update on `x [batch × input]` and `h_prev [batch × hidden]`:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ h~
/// ```
pub fn gru_step<T: Scalar>(
    g: &mut Graph<T>,
    p: &GruVars,
    x: Var,
    h_prev: Var,
) -> Result<GruStep<Var>> {
    let xz = g.linear(x, p.w_z, Some(p.b_z))?;
    let hz = g.linear(h_prev, p.u_z, None)?;
    let z = g.add(xz, hz)?;
    let z = g.sigmoid(z)?;

    let xr = g.linear(x, p.w_r, Some(p.b_r))?;
    let hr = g.linear(h_prev, p.u_r, None)?;
    let r = g.add(xr, hr)?;
    let r = g.sigmoid(r)?;

    let rh = g.mul(r, h_prev)?;
    let xh = g.linear(x, p.w_h, Some(p.b_h))?;
    let hh = g.linear(rh, p.u_h, None)?;
    let cand = g.add(xh, hh)?;
    let candidate = g.tanh(cand)?;

    // (1 - z) ⊙ h + z ⊙ h~  ==  h + z ⊙ (h~ - h)
    let diff = g.sub(candidate, h_prev)?;
    let step = g.mul(z, diff)?;
    let h = g.add(h_prev, step)?;
    Ok(GruStep { h, z, r, candidate })
}

/// Runs the cell over `seq [batch × input × T]` from a zero initial state and
/// returns the hidden sequence `[batch × hidden × T]`.
pub fn gru_layer_forward<T: Scalar>(g: &mut Graph<T>, p: &GruVars, seq: Var) -> Result<Var> {
    let shape = g.shape(seq).to_vec();
    let hidden = g.shape(p.b_z)[0];
    let input = g.shape(p.w_z)[1];
    if shape.len() != 3 {
        return Err(Error::shape(format!("GRU layer expects [batch × channels × T], got {shape:?}")));
    }
    if shape[1] != input {
        return Err(Error::shape(format!(
            "GRU layer declared input width {input} but sequence has {} channels",
            shape[1]
        )));
    }
    let (batch, steps) = (shape[0], shape[2]);
    if steps == 0 {
        return Err(Error::data("empty sequence"));
    }
    let mut h = g.constant(Tensor::zeros(vec![batch, hidden]));
    let mut states = Vec::with_capacity(steps);
    for t in 0..steps {
        let x_t = g.select(seq, 2, t)?;
        h = gru_step(g, p, x_t, h)?.h;
        states.push(h);
    }
    g.stack(&states, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params(w: f64, u: f64, b: f64) -> GruParams<f64> {
        let m = |v: f64| Tensor::new(vec![1, 1], vec![v]).unwrap();
        let bv = |v: f64| Tensor::new(vec![1], vec![v]).unwrap();
        GruParams {
            w_z: m(w),
            w_r: m(w),
            w_h: m(w),
            u_z: m(u),
            u_r: m(u),
            u_h: m(u),
            b_z: bv(b),
            b_r: bv(b),
            b_h: bv(b),
        }
    }

    fn t11(v: f64) -> Tensor<f64> {
        Tensor::new(vec![1, 1], vec![v]).unwrap()
    }

    #[test]
    fn zero_params_zero_state() {
        let p = GruParams::<f64>::zeros(3, 2);
        let x = Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let s = p.step(&x, &Tensor::zeros(vec![1, 2])).unwrap();
        assert_eq!(s.h.data(), &[0.0, 0.0]);
        assert_eq!(s.z.data(), &[0.5, 0.5]);
        assert_eq!(s.r.data(), &[0.5, 0.5]);
        assert_eq!(s.candidate.data(), &[0.0, 0.0]);
    }

    #[test]
    fn scalar_unit_against_closed_form() {
        // Independent evaluation of the four update equations.
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (x, h) = (1.0, 0.5);
        let z = sig(x + h);
        let r = sig(x + h);
        let cand = (x + r * h).tanh();
        let h_new = (1.0 - z) * h + z * cand;

        let s = unit_params(1.0, 1.0, 0.0).step(&t11(x), &t11(h)).unwrap();
        assert!((s.z.data()[0] - z).abs() < 1e-12);
        assert!((s.r.data()[0] - r).abs() < 1e-12);
        assert!((s.candidate.data()[0] - cand).abs() < 1e-12);
        assert!((s.h.data()[0] - h_new).abs() < 1e-12);
        assert!((z - 0.817_574_476_193_643_7).abs() < 1e-12);
        assert!((cand - 0.8872).abs() < 1e-4);
        assert!((h_new - 0.8166).abs() < 1e-4);
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let mut p = unit_params(1.0, 1.0, 0.0);
        p.b_z = Tensor::new(vec![1], vec![-1e3]).unwrap();
        let s = p.step(&t11(0.3), &t11(-0.7)).unwrap();
        assert!((s.h.data()[0] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn single_step_layer_equals_cell() {
        let mut prng = Prng::new(3);
        let p = GruParams::<f64>::init(2, 3, &mut prng);
        let x = Tensor::new(vec![1, 2, 1], vec![0.4, -0.9]).unwrap();
        let seq = p.forward(&x).unwrap();
        let cell = p
            .step(&Tensor::new(vec![1, 2], vec![0.4, -0.9]).unwrap(), &Tensor::zeros(vec![1, 3]))
            .unwrap();
        assert_eq!(seq.shape(), &[1, 3, 1]);
        assert_eq!(seq.data(), cell.h.data());
    }

    #[test]
    fn batch_equals_independent_runs() {
        let mut prng = Prng::new(8);
        let p = GruParams::<f64>::init(2, 3, &mut prng);
        let a: Vec<f64> = (0..10).map(|_| prng.normal()).collect();
        let b: Vec<f64> = (0..10).map(|_| prng.normal()).collect();
        let both = p
            .forward(&Tensor::new(vec![2, 2, 5], [a.clone(), b.clone()].concat()).unwrap())
            .unwrap();
        let ra = p.forward(&Tensor::new(vec![1, 2, 5], a).unwrap()).unwrap();
        let rb = p.forward(&Tensor::new(vec![1, 2, 5], b).unwrap()).unwrap();
        assert_eq!(both.data(), [ra.data(), rb.data()].concat().as_slice());
    }

    #[test]
    fn zero_params_zero_sequence() {
        let p = GruParams::<f64>::zeros(2, 4);
        let out = p.forward(&Tensor::zeros(vec![2, 2, 6])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_width() {
        let p = GruParams::<f64>::zeros(2, 4);
        assert!(matches!(p.forward(&Tensor::zeros(vec![1, 3, 4])), Err(Error::Shape(_))));
    }
}
