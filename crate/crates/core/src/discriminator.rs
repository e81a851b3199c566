//! Critic network: a strided convolution stack with batch norm and leaky ReLU, global
//! average pooling, two fully connected layers and a sigmoid.
//!
//! The default layer schedule follows the SRGAN critic (eight convolutions alternating
//! stride 1 and 2, widths 64 to 512, a 1024-unit hidden layer). The network never sees
//! class masks, in either mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::nn::activation::{leaky_relu, leaky_relu_backward, sigmoid_scalar};
use crate::nn::pool::{global_avg_pool, global_avg_pool_backward};
use crate::nn::{join, BatchNorm2d, BatchNormCache, Conv3x3, Linear, Module, Param};
use crate::tensor::{Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub width: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub convs: Vec<ConvSpec>,
    pub hidden: usize,
    /// Side length of the square inputs the critic accepts.
    pub patch_size: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        let convs = [
            (64, 1),
            (64, 2),
            (128, 1),
            (128, 2),
            (256, 1),
            (256, 2),
            (512, 1),
            (512, 2),
        ]
        .into_iter()
        .map(|(width, stride)| ConvSpec { width, stride })
        .collect();
        DiscriminatorConfig {
            convs,
            hidden: 1024,
            patch_size: 96,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.convs.is_empty() || self.hidden == 0 || self.patch_size == 0 {
            return Err(Error::Config(
                "critic needs at least one convolution, a hidden width and a patch size".into(),
            ));
        }
        if self
            .convs
            .iter()
            .any(|c| c.width == 0 || !(1..=2).contains(&c.stride))
        {
            return Err(Error::Config(
                "critic convolutions need positive widths and stride 1 or 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator<S> {
    cfg: DiscriminatorConfig,
    pub convs: Vec<Conv3x3<S>>,
    /// One per convolution after the first.
    pub norms: Vec<BatchNorm2d<S>>,
    pub fc1: Linear<S>,
    pub fc2: Linear<S>,
}

pub struct DiscriminatorCache<S> {
    /// Input of every convolution.
    conv_inputs: Vec<Tensor<S>>,
    norms: Vec<BatchNormCache<S>>,
    /// Output of the last activation, before pooling.
    features: Tensor<S>,
    pooled: Vec<S>,
    hidden: Vec<S>,
    probs: Vec<S>,
}

impl<S: Scalar> Discriminator<S> {
    pub fn new(cfg: DiscriminatorConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let mut convs = Vec::with_capacity(cfg.convs.len());
        let mut norms = Vec::with_capacity(cfg.convs.len() - 1);
        let mut cin = 1;
        for (i, spec) in cfg.convs.iter().enumerate() {
            convs.push(Conv3x3::new(cin, spec.width, spec.stride, rng));
            if i > 0 {
                norms.push(BatchNorm2d::new(spec.width));
            }
            cin = spec.width;
        }
        let fc1 = Linear::new(cin, cfg.hidden, rng);
        let fc2 = Linear::new(cfg.hidden, 1, rng);
        Ok(Discriminator {
            cfg,
            convs,
            norms,
            fc1,
            fc2,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    fn check(&self, x: &Tensor<S>) -> Result<()> {
        let p = self.cfg.patch_size;
        if x.channels() != 1 || x.height() != p || x.width() != p {
            return Err(dim_err!(
                "critic expects [N, 1, {p}, {p}] inputs, got {:?}",
                x.shape()
            ));
        }
        Ok(())
    }

    fn head(&self, pooled: &[S], batch: usize) -> Result<(Vec<S>, Vec<S>)> {
        let hidden = leaky_slice(&self.fc1.forward(pooled, batch)?);
        let logits = self.fc2.forward(&hidden, batch)?;
        Ok((hidden, logits.iter().map(|&z| probability(z)).collect()))
    }

    /// Evaluation-mode probabilities, one per image, strictly inside `(0, 1)`.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Vec<S>> {
        self.check(x)?;
        let mut h = x.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            let z = conv.forward(&h)?;
            let z = if i > 0 {
                self.norms[i - 1].forward(&z)?
            } else {
                z
            };
            h = leaky_relu(&z, LEAKY_SLOPE);
        }
        let pooled = global_avg_pool(&h);
        Ok(self.head(&pooled, x.batch())?.1)
    }

    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<(Vec<S>, DiscriminatorCache<S>)> {
        self.check(x)?;
        let mut conv_inputs = Vec::with_capacity(self.convs.len());
        let mut norm_caches = Vec::with_capacity(self.norms.len());
        let mut h = x.clone();
        for i in 0..self.convs.len() {
            let z = self.convs[i].forward(&h)?;
            let z = if i > 0 {
                let (y, c) = self.norms[i - 1].forward_train(&z)?;
                norm_caches.push(c);
                y
            } else {
                z
            };
            conv_inputs.push(std::mem::replace(&mut h, leaky_relu(&z, LEAKY_SLOPE)));
        }
        let pooled = global_avg_pool(&h);
        let (hidden, probs) = self.head(&pooled, x.batch())?;
        Ok((
            probs.clone(),
            DiscriminatorCache {
                conv_inputs,
                norms: norm_caches,
                features: h,
                pooled,
                hidden,
                probs,
            },
        ))
    }

    /// Backpropagates gradients w.r.t. the output probabilities and returns the input gradient.
    pub fn backward(&mut self, cache: &DiscriminatorCache<S>, d_prob: &[S]) -> Tensor<S> {
        let batch = cache.probs.len();
        let d_logit: Vec<S> = cache
            .probs
            .iter()
            .zip(d_prob)
            .map(|(&p, &g)| g * p * (S::one() - p))
            .collect();
        let d_hidden = self.fc2.backward(&cache.hidden, &d_logit, batch);
        let d_hidden: Vec<S> = cache
            .hidden
            .iter()
            .zip(&d_hidden)
            .map(|(&y, &g)| {
                if y > S::zero() {
                    g
                } else {
                    g * S::lit(LEAKY_SLOPE)
                }
            })
            .collect();
        let d_pooled = self.fc1.backward(&cache.pooled, &d_hidden, batch);
        let mut dh = global_avg_pool_backward(cache.features.shape(), &d_pooled);
        let mut act = &cache.features;
        for i in (0..self.convs.len()).rev() {
            let dz = leaky_relu_backward(act, &dh, LEAKY_SLOPE);
            let dz = if i > 0 {
                self.norms[i - 1].backward(&cache.norms[i - 1], &dz)
            } else {
                dz
            };
            dh = self.convs[i].backward(&cache.conv_inputs[i], &dz);
            act = &cache.conv_inputs[i];
        }
        dh
    }
}

/// Sigmoid kept strictly inside the open unit interval.
fn probability<S: Scalar>(z: S) -> S {
    let eps = S::epsilon();
    sigmoid_scalar(z).max(eps).min(S::one() - eps)
}

fn leaky_slice<S: Scalar>(x: &[S]) -> Vec<S> {
    let a = S::lit(LEAKY_SLOPE);
    x.iter()
        .map(|&v| if v > S::zero() { v } else { v * a })
        .collect()
}

impl<S: Scalar> Module<S> for Discriminator<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&join(prefix, &format!("conv.{i}")), f);
            if i > 0 {
                self.norms[i - 1].visit(&join(prefix, &format!("bn.{i}")), f);
            }
        }
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.visit_mut(&join(prefix, &format!("conv.{i}")), f);
            if i > 0 {
                self.norms[i - 1].visit_mut(&join(prefix, &format!("bn.{i}")), f);
            }
        }
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}
