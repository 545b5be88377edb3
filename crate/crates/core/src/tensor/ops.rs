//! Slice-level numeric kernels shared by the graph's forward and backward rules.

use super::Scalar;
use crate::error::{Error, Result};

/// Output shape of numpy-style broadcasting of `a` against `b`.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::shape(format!(
                    "cannot broadcast {a:?} against {b:?}"
                )))
            }
        };
    }
    Ok(out)
}

/// Strides of `shape` aligned to `out` rank, zero on broadcast axes.
fn aligned_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let o = i + rank - shape.len();
        strides[o] = if shape[i] == 1 && out[o] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Calls `f(out_index, a_index, b_index)` for every element of the broadcast output.
pub(crate) fn for_each_broadcast(
    a: &[usize],
    b: &[usize],
    out: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out.iter().product();
    if a == out && b == out {
        for i in 0..n {
            f(i, i, i);
        }
        return;
    }
    let nb: usize = b.iter().product();
    if a == out && out.ends_with(b) {
        for i in 0..n {
            f(i, i, i % nb);
        }
        return;
    }
    let sa = aligned_strides(a, out);
    let sb = aligned_strides(b, out);
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// Inner product with eight independent partial sums, so the loop
/// vectorizes while the summation order stays fixed.
#[inline]
pub(crate) fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let xs = x.chunks_exact(LANES);
    let ys = y.chunks_exact(LANES);
    let (xr, yr) = (xs.remainder(), ys.remainder());
    for (a, b) in xs.zip(ys) {
        for l in 0..LANES {
            acc[l] += a[l] * b[l];
        }
    }
    let mut tail = T::zero();
    for (&a, &b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    let mut s = T::zero();
    for v in acc {
        s += v;
    }
    s + tail
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// Geometry of a strided "same"-padded 1-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn new(
        batch: usize,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        len_in: usize,
    ) -> Self {
        ConvGeometry {
            batch,
            in_channels,
            out_channels,
            kernel,
            stride,
            len_in,
            len_out: len_in.div_ceil(stride),
            pad_left: (kernel - 1) / 2,
        }
    }

    /// Output positions `t` for which input index `t*stride + k - pad_left` is in range.
    #[inline]
    fn valid_range(&self, k: usize) -> (usize, usize) {
        // need t*s + k >= pad_left and t*s + k - pad_left < len_in
        let lo = if k >= self.pad_left {
            0
        } else {
            ((self.pad_left - k).div_ceil(self.stride)).min(self.len_out)
        };
        let limit = self.len_in + self.pad_left; // t*s + k < limit
        let hi = if limit > k {
            ((limit - k - 1) / self.stride + 1).min(self.len_out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// Gathers the receptive fields of one batch item into `cols[(c·K + k) × T_out]`,
/// zero where the window reaches into the padding.
fn im2col<T: Scalar>(g: &ConvGeometry, x: &[T], cols: &mut [T]) {
    let (kn, s) = (g.kernel, g.stride);
    for c in 0..g.in_channels {
        let xrow = &x[c * g.len_in..(c + 1) * g.len_in];
        for k in 0..kn {
            let row = &mut cols[(c * kn + k) * g.len_out..(c * kn + k + 1) * g.len_out];
            let (lo, hi) = g.valid_range(k);
            row[..lo].fill(T::zero());
            row[hi..].fill(T::zero());
            let base = k as isize - g.pad_left as isize;
            if hi == lo {
                continue;
            }
            if s == 1 {
                let start = (lo as isize + base) as usize;
                row[lo..hi].copy_from_slice(&xrow[start..start + (hi - lo)]);
            } else {
                for (t, v) in row.iter_mut().enumerate().take(hi).skip(lo) {
                    *v = xrow[((t * s) as isize + base) as usize];
                }
            }
        }
    }
}

/// Scatter-adds `cols` back onto the input positions they were read from.
fn col2im<T: Scalar>(g: &ConvGeometry, cols: &[T], gx: &mut [T]) {
    let (kn, s) = (g.kernel, g.stride);
    for c in 0..g.in_channels {
        let gxrow = &mut gx[c * g.len_in..(c + 1) * g.len_in];
        for k in 0..kn {
            let row = &cols[(c * kn + k) * g.len_out..(c * kn + k + 1) * g.len_out];
            let (lo, hi) = g.valid_range(k);
            let base = k as isize - g.pad_left as isize;
            if hi == lo {
                continue;
            }
            if s == 1 {
                let start = (lo as isize + base) as usize;
                for (d, &v) in gxrow[start..start + (hi - lo)].iter_mut().zip(&row[lo..hi]) {
                    *d += v;
                }
            } else {
                for (t, &v) in row.iter().enumerate().take(hi).skip(lo) {
                    gxrow[((t * s) as isize + base) as usize] += v;
                }
            }
        }
    }
}

/// Cross-correlation with "same" padding and stride; `out` is overwritten.
pub(crate) fn conv1d_forward<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (ci_n, co_n) = (g.in_channels, g.out_channels);
    let ck = ci_n * g.kernel;
    let mut cols = vec![T::zero(); ck * g.len_out];
    for b in 0..g.batch {
        im2col(g, &x[b * ci_n * g.len_in..(b + 1) * ci_n * g.len_in], &mut cols);
        let ob = &mut out[b * co_n * g.len_out..(b + 1) * co_n * g.len_out];
        for (o, row) in ob.chunks_mut(g.len_out).enumerate() {
            row.fill(bias[o]);
        }
        gemm_nn(w, &cols, ob, co_n, ck, g.len_out);
    }
}

/// Accumulates input, kernel and bias gradients of the convolution.
pub(crate) fn conv1d_backward<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    grad_out: &[T],
    mut grad_x: Option<&mut [T]>,
    mut grad_w: Option<&mut [T]>,
    grad_b: Option<&mut [T]>,
) {
    let (ci_n, co_n) = (g.in_channels, g.out_channels);
    let ck = ci_n * g.kernel;
    if let Some(gb) = grad_b {
        for b in 0..g.batch {
            for o in 0..co_n {
                let grow = &grad_out[(b * co_n + o) * g.len_out..(b * co_n + o + 1) * g.len_out];
                gb[o] += grow.iter().copied().sum::<T>();
            }
        }
    }
    let mut cols = vec![T::zero(); ck * g.len_out];
    for b in 0..g.batch {
        let gb_out = &grad_out[b * co_n * g.len_out..(b + 1) * co_n * g.len_out];
        if let Some(gw) = grad_w.as_deref_mut() {
            im2col(g, &x[b * ci_n * g.len_in..(b + 1) * ci_n * g.len_in], &mut cols);
            gemm_nt(gb_out, &cols, gw, co_n, g.len_out, ck);
        }
        if let Some(gx) = grad_x.as_deref_mut() {
            cols.fill(T::zero());
            gemm_tn(w, gb_out, &mut cols, co_n, ck, g.len_out);
            col2im(g, &cols, &mut gx[b * ci_n * g.len_in..(b + 1) * ci_n * g.len_in]);
        }
    }
}
