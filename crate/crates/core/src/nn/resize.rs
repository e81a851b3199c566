//! Separable resampling with half-pixel-centre alignment.
//!
//! Output index `o` maps to source coordinate `(o + 0.5)·in/out − 0.5`, clamped at zero,
//! which for integer down-sampling factors averages the two central source samples of
//! each block and for ×2 up-sampling reproduces the usual non-corner-aligned bilinear
//! interpolation.

use crate::tensor::{Scalar, Tensor};

/// One output sample of a 1-D linear interpolation: `(1−w)·src[lo] + w·src[hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub w: f64,
}

pub fn linear_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            Tap {
                lo,
                hi,
                w: src - lo as f64,
            }
        })
        .collect()
}

/// Nearest-neighbour source index for each output index.
pub fn nearest_index(input: usize, output: usize) -> Vec<usize> {
    (0..output)
        .map(|o| (o * input / output).min(input - 1))
        .collect()
}

/// Bilinear resize of every plane in the batch.
pub fn bilinear<S: Scalar>(x: &Tensor<S>, out_h: usize, out_w: usize) -> Tensor<S> {
    let [n, c, h, w] = x.shape();
    let ty = linear_taps(h, out_h);
    let tx = linear_taps(w, out_w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    let mut row = vec![S::zero(); w];
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for (oy, t) in ty.iter().enumerate() {
                let (wy1, wy0) = (S::lit(t.w), S::lit(1.0 - t.w));
                let (r0, r1) = (&src[t.lo * w..][..w], &src[t.hi * w..][..w]);
                for ((r, &a), &b2) in row.iter_mut().zip(r0).zip(r1) {
                    *r = a * wy0 + b2 * wy1;
                }
                for (d, t) in dst[oy * out_w..(oy + 1) * out_w].iter_mut().zip(&tx) {
                    *d = row[t.lo] * S::lit(1.0 - t.w) + row[t.hi] * S::lit(t.w);
                }
            }
        }
    }
    out
}

/// Adjoint of [`bilinear`]: scatters output gradients back to the source grid.
pub fn bilinear_backward<S: Scalar>(input_shape: [usize; 4], dy: &Tensor<S>) -> Tensor<S> {
    let [n, c, h, w] = input_shape;
    let (out_h, out_w) = (dy.height(), dy.width());
    let ty = linear_taps(h, out_h);
    let tx = linear_taps(w, out_w);
    let mut dx = Tensor::zeros(input_shape);
    let mut row = vec![S::zero(); w];
    for b in 0..n {
        for ch in 0..c {
            let g = dy.plane(b, ch);
            let dst = dx.plane_mut(b, ch);
            for (oy, t) in ty.iter().enumerate() {
                row.fill(S::zero());
                for (&gv, tx) in g[oy * out_w..(oy + 1) * out_w].iter().zip(&tx) {
                    row[tx.lo] += gv * S::lit(1.0 - tx.w);
                    row[tx.hi] += gv * S::lit(tx.w);
                }
                let (wy0, wy1) = (S::lit(1.0 - t.w), S::lit(t.w));
                for (x, &r) in row.iter().enumerate() {
                    dst[t.lo * w + x] += r * wy0;
                    dst[t.hi * w + x] += r * wy1;
                }
            }
        }
    }
    dx
}

/// Nearest-neighbour resize of every plane in the batch.
pub fn nearest<S: Scalar>(x: &Tensor<S>, out_h: usize, out_w: usize) -> Tensor<S> {
    let [n, c, h, w] = x.shape();
    let iy = nearest_index(h, out_h);
    let ix = nearest_index(w, out_w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for (oy, &sy) in iy.iter().enumerate() {
                for (ox, &sx) in ix.iter().enumerate() {
                    dst[oy * out_w + ox] = src[sy * w + sx];
                }
            }
        }
    }
    out
}
