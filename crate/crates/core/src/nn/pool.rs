use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Argmax positions of a 2×2/stride-2 max pool, as flat indices into the input.
#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    input_shape: [usize; 4],
    argmax: Vec<u32>,
}

pub fn max_pool2<S: Scalar>(x: &Tensor<S>) -> Result<(Tensor<S>, MaxPoolCache)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(dim_err!("2x2 max pool needs even extents, got {h}x{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(out.len());
    let src = x.data();
    for p in 0..n * c {
        let base = p * h * w;
        let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * w + 2 * ox;
                let mut best = i0;
                for cand in [i0 + 1, i0 + w, i0 + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                dst[oy * ow + ox] = src[best];
                argmax.push(best as u32);
            }
        }
    }
    Ok((
        out,
        MaxPoolCache {
            input_shape: x.shape(),
            argmax,
        },
    ))
}

pub fn max_pool2_backward<S: Scalar>(cache: &MaxPoolCache, dy: &Tensor<S>) -> Tensor<S> {
    let mut dx = Tensor::zeros(cache.input_shape);
    let d = dx.data_mut();
    for (&i, &g) in cache.argmax.iter().zip(dy.data()) {
        d[i as usize] += g;
    }
    dx
}

/// Global average pool to `[batch, channels]`.
pub fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Vec<S> {
    let p = S::lit(x.plane_len() as f64);
    (0..x.batch())
        .flat_map(|n| (0..x.channels()).map(move |c| (n, c)))
        .map(|(n, c)| x.plane(n, c).iter().copied().sum::<S>() / p)
        .collect()
}

pub fn global_avg_pool_backward<S: Scalar>(shape: [usize; 4], dy: &[S]) -> Tensor<S> {
    let mut dx = Tensor::zeros(shape);
    let p = S::lit((shape[2] * shape[3]) as f64);
    for n in 0..shape[0] {
        for c in 0..shape[1] {
            let g = dy[n * shape[1] + c] / p;
            dx.plane_mut(n, c).fill(g);
        }
    }
    dx
}
