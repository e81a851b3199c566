//! 3×3 convolution with unit zero padding, lowered to GEMM through im2col.

use rand::Rng;

use super::param::{join, Module, Param};
use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

const TAPS: usize = 9;

#[derive(Clone, Debug)]
pub struct Conv3x3<S> {
    in_channels: usize,
    out_channels: usize,
    stride: usize,
    /// `[out, in, 3, 3]`
    pub weight: Param<S>,
    pub bias: Param<S>,
}

impl<S: Scalar> Conv3x3<S> {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new(in_channels: usize, out_channels: usize, stride: usize, rng: &mut impl Rng) -> Self {
        assert!(stride >= 1);
        let fan_in = (in_channels * TAPS) as f64;
        Conv3x3 {
            in_channels,
            out_channels,
            stride,
            weight: Param::uniform(&[out_channels, in_channels, 3, 3], 1.0 / fan_in.sqrt(), rng),
            bias: Param::zeros(&[out_channels]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        ((h - 1) / self.stride + 1, (w - 1) / self.stride + 1)
    }

    fn check(&self, x: &Tensor<S>) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(dim_err!(
                "convolution expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check(x)?;
        let [n, _, h, w] = x.shape();
        let (oh, ow) = self.output_hw(h, w);
        let k = self.in_channels * TAPS;
        let op = oh * ow;
        let mut out = Tensor::zeros([n, self.out_channels, oh, ow]);
        let mut cols = vec![S::zero(); k * op];
        for i in 0..n {
            im2col(
                x.item(i),
                self.in_channels,
                h,
                w,
                self.stride,
                oh,
                ow,
                &mut cols,
            );
            let dst = out.item_mut(i);
            for (c, plane) in dst.chunks_mut(op).enumerate() {
                plane.fill(self.bias.value[c]);
            }
            S::gemm(
                self.out_channels,
                k,
                op,
                S::one(),
                &self.weight.value,
                (k as isize, 1),
                &cols,
                (op as isize, 1),
                S::one(),
                dst,
                (op as isize, 1),
            );
        }
        Ok(out)
    }

    /// Accumulates weight/bias gradients only; for layers whose input needs no gradient.
    pub fn backward_params(&mut self, x: &Tensor<S>, dy: &Tensor<S>) {
        let [n, _, h, w] = x.shape();
        let (oh, ow) = self.output_hw(h, w);
        // dW += dY · colsᵀ
        let k = self.in_channels * TAPS;
        let op = oh * ow;
        let mut cols = vec![S::zero(); k * op];
        for i in 0..n {
            let g = dy.item(i);
            for (c, plane) in g.chunks(op).enumerate() {
                self.bias.grad[c] += plane.iter().copied().sum::<S>();
            }
            im2col(
                x.item(i),
                self.in_channels,
                h,
                w,
                self.stride,
                oh,
                ow,
                &mut cols,
            );
            S::gemm(
                self.out_channels,
                op,
                k,
                S::one(),
                g,
                (op as isize, 1),
                &cols,
                (1, op as isize),
                S::one(),
                &mut self.weight.grad,
                (k as isize, 1),
            );
        }
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
        self.backward_params(x, dy);
        self.backward_input(x.shape(), dy)
    }

    /// Input gradient only; parameters are left untouched.
    pub fn backward_input(&self, input_shape: [usize; 4], dy: &Tensor<S>) -> Tensor<S> {
        let [n, _, h, w] = input_shape;
        let (oh, ow) = self.output_hw(h, w);
        debug_assert_eq!(dy.shape(), [n, self.out_channels, oh, ow]);
        let k = self.in_channels * TAPS;
        let op = oh * ow;
        let mut dx = Tensor::zeros(input_shape);
        let mut dcols = vec![S::zero(); k * op];
        for i in 0..n {
            // dcols = Wᵀ · dY
            S::gemm(
                k,
                self.out_channels,
                op,
                S::one(),
                &self.weight.value,
                (1, k as isize),
                dy.item(i),
                (op as isize, 1),
                S::zero(),
                &mut dcols,
                (op as isize, 1),
            );
            col2im(
                &dcols,
                self.in_channels,
                h,
                w,
                self.stride,
                oh,
                ow,
                dx.item_mut(i),
            );
        }
        dx
    }
}

impl<S: Scalar> Module<S> for Conv3x3<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Source coordinate for output index `o` and kernel tap `t ∈ {0,1,2}`, or `None` in the padding.
#[inline]
fn source(o: usize, t: usize, stride: usize, extent: usize) -> Option<usize> {
    let s = (o * stride + t).checked_sub(1)?;
    (s < extent).then_some(s)
}

#[allow(clippy::too_many_arguments)]
fn im2col<S: Scalar>(
    src: &[S],
    channels: usize,
    h: usize,
    w: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    cols: &mut [S],
) {
    let op = oh * ow;
    for c in 0..channels {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * 3 + ky) * 3 + kx) * op..][..op];
                for oy in 0..oh {
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    let Some(iy) = source(oy, ky, stride, h) else {
                        dst.fill(S::zero());
                        continue;
                    };
                    let line = &plane[iy * w..(iy + 1) * w];
                    if stride == 1 {
                        // ix = ox + kx - 1
                        match kx {
                            0 => {
                                dst[0] = S::zero();
                                dst[1..].copy_from_slice(&line[..w - 1]);
                            }
                            1 => dst.copy_from_slice(line),
                            _ => {
                                dst[..w - 1].copy_from_slice(&line[1..]);
                                dst[w - 1] = S::zero();
                            }
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = source(ox, kx, stride, w).map_or(S::zero(), |ix| line[ix]);
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<S: Scalar>(
    cols: &[S],
    channels: usize,
    h: usize,
    w: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    dst: &mut [S],
) {
    let op = oh * ow;
    for c in 0..channels {
        let plane = &mut dst[c * h * w..(c + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 3 + ky) * 3 + kx) * op..][..op];
                for oy in 0..oh {
                    let Some(iy) = source(oy, ky, stride, h) else {
                        continue;
                    };
                    let src = &row[oy * ow..(oy + 1) * ow];
                    let line = &mut plane[iy * w..(iy + 1) * w];
                    if stride == 1 {
                        // ix = ox + kx - 1
                        let (d, s) = match kx {
                            0 => (&mut line[..w - 1], &src[1..]),
                            1 => (&mut line[..], src),
                            _ => (&mut line[1..], &src[..w - 1]),
                        };
                        d.iter_mut().zip(s).for_each(|(a, &g)| *a += g);
                        continue;
                    }
                    for (ox, &g) in src.iter().enumerate() {
                        if let Some(ix) = source(ox, kx, stride, w) {
                            line[ix] += g;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct(conv: &Conv3x3<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let [n, ci, h, w] = x.shape();
        let (oh, ow) = conv.output_hw(h, w);
        let co = conv.out_channels();
        let mut out = Tensor::zeros([n, co, oh, ow]);
        for b in 0..n {
            for o in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.value[o];
                        for i in 0..ci {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * conv.stride + ky) as isize - 1;
                                    let ix = (ox * conv.stride + kx) as isize - 1;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += conv.weight.value[((o * ci + i) * 3 + ky) * 3 + kx]
                                        * x.at(b, i, iy as usize, ix as usize);
                                }
                            }
                        }
                        out.plane_mut(b, o)[oy * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for stride in [1, 2] {
            let mut conv = Conv3x3::<f64>::new(3, 4, stride, &mut rng);
            conv.bias
                .value
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-1.0..1.0));
            let x = Tensor::from_vec(
                [2, 3, 7, 6],
                (0..2 * 3 * 42)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let got = conv.forward(&x).unwrap();
            let want = direct(&conv, &x);
            assert_eq!(got.shape(), want.shape());
            assert!(got.max_abs_diff(&want) < 1e-12, "stride {stride}");
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv3x3::<f32>::new(2, 2, 1, &mut rng);
        assert!(conv.forward(&Tensor::zeros([1, 3, 4, 4])).is_err());
    }
}
