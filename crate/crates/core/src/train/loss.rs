use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// Mean cross-entropy of `logits [B × K]` against class indices, recorded on
/// the graph so it can be differentiated.
pub fn softmax_cross_entropy<T: Scalar>(g: &mut Graph<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    g.softmax_cross_entropy(logits, labels)
}

/// Row-wise softmax of `logits [B × K]`.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let k = row_width(logits)?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Index of the largest entry in each row; ties go to the lowest index.
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<usize>> {
    let k = row_width(logits)?;
    Ok(logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

fn row_width<T: Scalar>(logits: &Tensor<T>) -> Result<usize> {
    match logits.shape() {
        [_, k] => Ok(*k),
        s => Err(Error::shape(format!("expected [batch × classes] logits, got {s:?}"))),
    }
}
