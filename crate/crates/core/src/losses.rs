//! Pixel, perceptual and adversarial losses and their gradients.
//!
//! Batched forms average over the batch. Gradient helpers return `dL/d(generated)` or
//! `dL/d(probability)`, ready to be fed into the network backward passes.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::Container;
use crate::error::{dim_err, Error, Result};
use crate::image::ImagePlane;
use crate::nn::activation::{relu, relu_backward};
use crate::nn::pool::{max_pool2, max_pool2_backward, MaxPoolCache};
use crate::nn::{Conv3x3, Module, Param};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before taking logarithms.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the perceptual term.
    pub alpha: f64,
    /// Weight of the generator adversarial term.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.01,
            gamma: 0.005,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0
            && self.gamma >= 0.0
            && self.alpha.is_finite()
            && self.gamma.is_finite())
        {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative, got alpha={} gamma={}",
                self.alpha, self.gamma
            )));
        }
        Ok(())
    }
}

fn same_shape<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!(
            "loss operands differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

/// Mean squared difference over every pixel.
pub fn mse_loss(target: &ImagePlane, generated: &ImagePlane) -> Result<f64> {
    if target.dims() != generated.dims() {
        return Err(dim_err!(
            "images differ in size: {:?} vs {:?}",
            target.dims(),
            generated.dims()
        ));
    }
    let n = target.values().len().max(1) as f64;
    Ok(target
        .values()
        .iter()
        .zip(generated.values())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n)
}

pub fn mse<S: Scalar>(target: &Tensor<S>, generated: &Tensor<S>) -> Result<S> {
    same_shape(target, generated)?;
    let n = S::lit(target.len().max(1) as f64);
    Ok(target
        .data()
        .iter()
        .zip(generated.data())
        .map(|(&a, &b)| (b - a) * (b - a))
        .sum::<S>()
        / n)
}

/// Loss and its gradient with respect to `generated`.
pub fn mse_with_grad<S: Scalar>(
    target: &Tensor<S>,
    generated: &Tensor<S>,
) -> Result<(S, Tensor<S>)> {
    let loss = mse(target, generated)?;
    let k = S::lit(2.0 / target.len().max(1) as f64);
    Ok((loss, generated.zip_map(target, |g, t| k * (g - t))))
}

fn check_probability(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Input(format!("probability {p} lies outside [0, 1]")));
    }
    Ok(p.clamp(PROB_EPS, 1.0 - PROB_EPS))
}

/// `-log D(G(x))`.
pub fn adv_gen_loss(d_out: f64) -> Result<f64> {
    Ok(-check_probability(d_out)?.ln())
}

/// `-log D(real) - log(1 - D(G(x)))`.
pub fn adv_disc_loss(d_real: f64, d_fake: f64) -> Result<f64> {
    let r = check_probability(d_real)?;
    let f = check_probability(d_fake)?;
    Ok(-r.ln() - (1.0 - f).ln())
}

/// `α·l_vgg + γ·l_adv`.
pub fn total_loss(l_vgg: f64, l_adv_g: f64, w: &LossWeights) -> Result<f64> {
    if !l_vgg.is_finite() || !l_adv_g.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss term: vgg={l_vgg} adv={l_adv_g}"
        )));
    }
    Ok(w.alpha * l_vgg + w.gamma * l_adv_g)
}

/// Derivative of the clamped `-ln p`; zero where the clamp is active.
fn neg_log_grad(p: f64) -> f64 {
    if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        -1.0 / p
    } else {
        0.0
    }
}

/// Batch-mean generator adversarial loss and `dL/dp` per image.
pub fn adv_gen_with_grad<S: Scalar>(probs: &[S]) -> Result<(S, Vec<S>)> {
    let n = probs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for &p in probs {
        let p = p.as_f64();
        loss += adv_gen_loss(p)?;
        grad.push(S::lit(neg_log_grad(p) / n));
    }
    Ok((S::lit(loss / n), grad))
}

/// Batch-mean discriminator loss and gradients for the real and generated probabilities.
pub fn adv_disc_with_grad<S: Scalar>(real: &[S], fake: &[S]) -> Result<(S, Vec<S>, Vec<S>)> {
    if real.len() != fake.len() {
        return Err(dim_err!(
            "{} real vs {} generated probabilities",
            real.len(),
            fake.len()
        ));
    }
    let n = real.len().max(1) as f64;
    let mut loss = 0.0;
    let mut dr = Vec::with_capacity(real.len());
    let mut df = Vec::with_capacity(fake.len());
    for (&r, &f) in real.iter().zip(fake) {
        let (r, f) = (r.as_f64(), f.as_f64());
        loss += adv_disc_loss(r, f)?;
        dr.push(S::lit(neg_log_grad(r) / n));
        // d/df of -ln(1 - f) = -d/dq (ln q) · dq/df with q = 1 - f
        df.push(S::lit(-neg_log_grad(1.0 - f) / n));
    }
    Ok((S::lit(loss / n), dr, df))
}

/// Per-channel normalization applied after the gray image is replicated to three channels
/// and mapped from signed to unit range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Preprocess {
    /// ImageNet statistics, as expected by pretrained VGG weights.
    fn default() -> Self {
        Preprocess {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl Preprocess {
    fn apply<S: Scalar>(&self, x: &Tensor<S>) -> Tensor<S> {
        let [n, _, h, w] = x.shape();
        let mut out = Tensor::zeros([n, 3, h, w]);
        for b in 0..n {
            for c in 0..3 {
                let (m, s) = (S::lit(self.mean[c]), S::lit(self.std[c]));
                let half = S::lit(0.5);
                let src = x.plane(b, 0);
                for (o, &v) in out.plane_mut(b, c).iter_mut().zip(src) {
                    *o = ((v + S::one()) * half - m) / s;
                }
            }
        }
        out
    }

    fn backward<S: Scalar>(&self, dy: &Tensor<S>) -> Tensor<S> {
        let [n, _, h, w] = dy.shape();
        let mut dx = Tensor::zeros([n, 1, h, w]);
        for b in 0..n {
            for c in 0..3 {
                let k = S::lit(0.5 / self.std[c]);
                let src = dy.plane(b, c);
                for (o, &g) in dx.plane_mut(b, 0).iter_mut().zip(src) {
                    *o += k * g;
                }
            }
        }
        dx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorLayer {
    pub width: usize,
    /// 2×2 max-pool after the activation.
    pub pool: bool,
}

/// Frozen `conv → ReLU (→ max-pool)` stack; features are the output of the last layer.
#[derive(Clone, Debug)]
pub struct ConvFeatureExtractor<S> {
    pub layers: Vec<(ExtractorLayer, Conv3x3<S>)>,
    pub preprocess: Preprocess,
}

struct ExtractorTape<S> {
    /// Per layer: conv input, activation output, pool cache.
    layers: Vec<(Tensor<S>, Tensor<S>, Option<MaxPoolCache>)>,
}

impl<S: Scalar> ConvFeatureExtractor<S> {
    /// Fixed-seed random weights scaled for unit-variance propagation through ReLU.
    pub fn random(layers: &[ExtractorLayer], seed: u64) -> Result<Self> {
        if layers.is_empty() || layers.iter().any(|l| l.width == 0) {
            return Err(Error::Config(
                "feature extractor needs at least one layer of positive width".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let layers = layers
            .iter()
            .map(|&spec| {
                let mut conv = Conv3x3::new(cin, spec.width, 1, &mut rng);
                let gain = S::lit(6f64.sqrt());
                conv.weight.value.iter_mut().for_each(|w| *w *= gain);
                cin = spec.width;
                (spec, conv)
            })
            .collect();
        Ok(ConvFeatureExtractor {
            layers,
            preprocess: Preprocess::default(),
        })
    }

    fn run(&self, x: &Tensor<S>, mut tape: Option<&mut ExtractorTape<S>>) -> Result<Tensor<S>> {
        if x.channels() != 1 {
            return Err(dim_err!(
                "feature extractor expects 1-channel images, got {}",
                x.channels()
            ));
        }
        let mut h = self.preprocess.apply(x);
        for (spec, conv) in &self.layers {
            let a = relu(&conv.forward(&h)?);
            let (out, pc) = if spec.pool {
                let (p, c) = max_pool2(&a).map_err(|_| {
                    dim_err!(
                        "feature extractor cannot pool a {}x{} map",
                        a.height(),
                        a.width()
                    )
                })?;
                (p, Some(c))
            } else {
                (a.clone(), None)
            };
            if let Some(t) = tape.as_deref_mut() {
                t.layers.push((h, a, pc));
            }
            h = out;
        }
        Ok(h)
    }

    fn input_grad(&self, tape: &ExtractorTape<S>, d_features: &Tensor<S>) -> Tensor<S> {
        let mut g = d_features.clone();
        for ((_, conv), (input, act, pc)) in self.layers.iter().zip(&tape.layers).rev() {
            if let Some(pc) = pc {
                g = max_pool2_backward(pc, &g);
            }
            let dz = relu_backward(act, &g);
            g = conv.backward_input(input.shape(), &dz);
        }
        self.preprocess.backward(&g)
    }

    pub fn to_container(&self) -> Container {
        let specs: Vec<ExtractorLayer> = self.layers.iter().map(|(s, _)| *s).collect();
        let mut c = Container::new(json!({
            "kind": "feature-extractor",
            "layers": specs,
            "preprocess": self.preprocess,
        }));
        for (i, (_, conv)) in self.layers.iter().enumerate() {
            conv.visit(&format!("layer.{i}"), &mut |name, p| {
                c.push(
                    name,
                    p.shape(),
                    p.value.iter().map(|v| v.as_f64() as f32).collect(),
                )
            });
        }
        c
    }

    /// Loads weights written by [`ConvFeatureExtractor::to_container`]. Published pretrained
    /// networks (e.g. the VGG-19 convolution stack) can be converted into this layout.
    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::load(path)?;
        let bad = |msg: &str| Error::format(path, msg.to_string());
        if c.meta.get("kind").and_then(|k| k.as_str()) != Some("feature-extractor") {
            return Err(bad("not a feature-extractor weight file"));
        }
        let specs: Vec<ExtractorLayer> = serde_json::from_value(c.meta["layers"].clone())
            .map_err(|e| bad(&format!("bad layer list: {e}")))?;
        let preprocess: Preprocess = serde_json::from_value(c.meta["preprocess"].clone())
            .map_err(|e| bad(&format!("bad preprocessing block: {e}")))?;
        let mut fx = Self::random(&specs, 0)?;
        fx.preprocess = preprocess;
        let index = c.index();
        for (i, (_, conv)) in fx.layers.iter_mut().enumerate() {
            let mut problem = None;
            conv.visit_mut(
                &format!("layer.{i}"),
                &mut |name, p: &mut Param<S>| match index.get(name) {
                    Some((e, v)) if e.shape == p.shape() => p
                        .value
                        .iter_mut()
                        .zip(v.iter())
                        .for_each(|(d, &s)| *d = S::lit(s as f64)),
                    _ => problem = Some(name.to_string()),
                },
            );
            if let Some(name) = problem {
                return Err(bad(&format!("missing or misshapen tensor {name}")));
            }
        }
        Ok(fx)
    }
}

/// Feature map `φ` of the perceptual loss. The extractor is never trained.
#[derive(Clone, Debug)]
pub enum FeatureExtractor<S> {
    /// `φ(x) = x`; the perceptual loss then equals the pixel MSE.
    Identity,
    Conv(ConvFeatureExtractor<S>),
}

/// Serializable description of an extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExtractorConfig {
    Identity,
    /// Fixed-seed random convolution stack.
    Random {
        layers: Vec<ExtractorLayer>,
        seed: u64,
    },
    /// Weights from a container file.
    File {
        path: PathBuf,
    },
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig::Random {
            layers: vec![
                ExtractorLayer {
                    width: 16,
                    pool: false,
                },
                ExtractorLayer {
                    width: 32,
                    pool: true,
                },
                ExtractorLayer {
                    width: 32,
                    pool: false,
                },
            ],
            seed: 19,
        }
    }
}

impl ExtractorConfig {
    pub fn build<S: Scalar>(&self) -> Result<FeatureExtractor<S>> {
        Ok(match self {
            ExtractorConfig::Identity => FeatureExtractor::Identity,
            ExtractorConfig::Random { layers, seed } => {
                FeatureExtractor::Conv(ConvFeatureExtractor::random(layers, *seed)?)
            }
            ExtractorConfig::File { path } => {
                FeatureExtractor::Conv(ConvFeatureExtractor::load(path)?)
            }
        })
    }
}

impl<S: Scalar> FeatureExtractor<S> {
    pub fn features(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            FeatureExtractor::Identity => Ok(x.clone()),
            FeatureExtractor::Conv(fx) => fx.run(x, None),
        }
    }

    /// Features plus the gradient map `dφ/dx` applied to `d_features`.
    fn features_with_backprop(
        &self,
        x: &Tensor<S>,
    ) -> Result<(Tensor<S>, Box<dyn Fn(&Tensor<S>) -> Tensor<S> + '_>)> {
        match self {
            FeatureExtractor::Identity => Ok((x.clone(), Box::new(|g: &Tensor<S>| g.clone()))),
            FeatureExtractor::Conv(fx) => {
                let mut tape = ExtractorTape { layers: Vec::new() };
                let f = fx.run(x, Some(&mut tape))?;
                Ok((f, Box::new(move |g: &Tensor<S>| fx.input_grad(&tape, g))))
            }
        }
    }

    /// Visits the (frozen) extractor weights.
    pub fn visit(&self, f: &mut dyn FnMut(&str, &Param<S>)) {
        if let FeatureExtractor::Conv(fx) = self {
            for (i, (_, conv)) in fx.layers.iter().enumerate() {
                conv.visit(&format!("layer.{i}"), f);
            }
        }
    }
}

/// Mean over channels and the feature grid of squared feature differences.
pub fn perceptual_loss<S: Scalar>(
    target: &Tensor<S>,
    generated: &Tensor<S>,
    fx: &FeatureExtractor<S>,
) -> Result<S> {
    same_shape(target, generated)?;
    mse(&fx.features(target)?, &fx.features(generated)?)
}

/// Loss and gradient w.r.t. `generated`, given precomputed target features.
pub fn perceptual_with_grad<S: Scalar>(
    target_features: &Tensor<S>,
    generated: &Tensor<S>,
    fx: &FeatureExtractor<S>,
) -> Result<(S, Tensor<S>)> {
    let (f, back) = fx.features_with_backprop(generated)?;
    let (loss, df) = mse_with_grad(target_features, &f)?;
    Ok((loss, back(&df)))
}
