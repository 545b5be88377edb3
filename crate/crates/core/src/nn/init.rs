use crate::tensor::{Prng, Scalar, Tensor};

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Tensor of `shape` drawn uniformly from `±glorot_bound(fan_in, fan_out)`.
pub fn glorot_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    prng: &mut Prng,
) -> Tensor<T> {
    let bound = glorot_bound(fan_in, fan_out);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::cast(prng.uniform(-bound, bound))).collect();
    Tensor::from_parts(shape.to_vec(), data)
}
