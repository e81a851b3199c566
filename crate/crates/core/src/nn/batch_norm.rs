use super::param::{join, Module, Param};
use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Affine batch normalization over `[batch, height, width]` per channel.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<S> {
    channels: usize,
    pub gain: Param<S>,
    pub bias: Param<S>,
    pub running_mean: Param<S>,
    pub running_var: Param<S>,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<S> {
    normalized: Tensor<S>,
    inv_std: Vec<S>,
}

impl<S: Scalar> BatchNorm2d<S> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gain: Param::trainable(&[channels], vec![S::one(); channels]),
            bias: Param::zeros(&[channels]),
            running_mean: Param::buffer(&[channels], vec![S::zero(); channels]),
            running_var: Param::buffer(&[channels], vec![S::one(); channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn check(&self, x: &Tensor<S>) -> Result<()> {
        if x.channels() != self.channels {
            return Err(dim_err!(
                "batch norm over {} channels got {} channels",
                self.channels,
                x.channels()
            ));
        }
        Ok(())
    }

    /// Normalizes with running statistics.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check(x)?;
        let mut y = x.clone();
        let eps = S::lit(BN_EPS);
        for c in 0..self.channels {
            let inv = S::one() / (self.running_var.value[c] + eps).sqrt();
            let scale = self.gain.value[c] * inv;
            let shift = self.bias.value[c] - self.running_mean.value[c] * scale;
            for n in 0..x.batch() {
                for v in y.plane_mut(n, c) {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(y)
    }

    /// Normalizes with batch statistics and folds them into the running estimates.
    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<(Tensor<S>, BatchNormCache<S>)> {
        self.check(x)?;
        let [n, _, h, w] = x.shape();
        let count = (n * h * w) as f64;
        let mut normalized = x.clone();
        let mut inv_std = Vec::with_capacity(self.channels);
        let mut y = x.clone();
        let momentum = S::lit(BN_MOMENTUM);
        for c in 0..self.channels {
            let (mut sum, mut sq) = (0.0f64, 0.0f64);
            for b in 0..n {
                for &v in x.plane(b, c) {
                    let v = v.as_f64();
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / count;
            let var = (sq / count - mean * mean).max(0.0);
            let inv = 1.0 / (var + BN_EPS).sqrt();
            let (mean_s, inv_s) = (S::lit(mean), S::lit(inv));
            let (gain, bias) = (self.gain.value[c], self.bias.value[c]);
            for b in 0..n {
                let src = x.plane(b, c);
                let nrm = normalized.plane_mut(b, c);
                for (d, &v) in nrm.iter_mut().zip(src) {
                    *d = (v - mean_s) * inv_s;
                }
                let nrm = normalized.plane(b, c);
                for (d, &v) in y.plane_mut(b, c).iter_mut().zip(nrm) {
                    *d = v * gain + bias;
                }
            }
            inv_std.push(inv_s);
            let unbiased = if count > 1.0 {
                var * count / (count - 1.0)
            } else {
                var
            };
            let rm = &mut self.running_mean.value[c];
            *rm = (S::one() - momentum) * *rm + momentum * mean_s;
            let rv = &mut self.running_var.value[c];
            *rv = (S::one() - momentum) * *rv + momentum * S::lit(unbiased);
        }
        Ok((
            y,
            BatchNormCache {
                normalized,
                inv_std,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BatchNormCache<S>, dy: &Tensor<S>) -> Tensor<S> {
        let [n, _, h, w] = dy.shape();
        let count = (n * h * w) as f64;
        let mut dx = Tensor::zeros(dy.shape());
        for c in 0..self.channels {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
            for b in 0..n {
                for (&g, &xh) in dy.plane(b, c).iter().zip(cache.normalized.plane(b, c)) {
                    sum_dy += g.as_f64();
                    sum_dy_xhat += (g * xh).as_f64();
                }
            }
            self.bias.grad[c] += S::lit(sum_dy);
            self.gain.grad[c] += S::lit(sum_dy_xhat);
            let gain = self.gain.value[c];
            // dx = gain·inv_std·(dy − mean(dy) − x̂·mean(dy·x̂))
            let k = gain * cache.inv_std[c];
            let mean_dy = S::lit(sum_dy / count);
            let mean_dy_xhat = S::lit(sum_dy_xhat / count);
            for b in 0..n {
                let xh = cache.normalized.plane(b, c);
                let g = dy.plane(b, c);
                for ((d, &g), &xh) in dx.plane_mut(b, c).iter_mut().zip(g).zip(xh) {
                    *d = k * (g - mean_dy - xh * mean_dy_xhat);
                }
            }
        }
        dx
    }
}

impl<S: Scalar> Module<S> for BatchNorm2d<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        f(&join(prefix, "gain"), &self.gain);
        f(&join(prefix, "bias"), &self.bias);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        f(&join(prefix, "gain"), &mut self.gain);
        f(&join(prefix, "bias"), &mut self.bias);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}
