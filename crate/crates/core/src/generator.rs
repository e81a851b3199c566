//! U-Net/Res-Net hybrid generator.
//!
//! ```text
//! down ℓ:  conv → residual → (skip ℓ) → max-pool 2×2
//! bridge:  conv → residual → bilinear ×2
//! up ℓ:    concat(skip ℓ, up) → conv → NL → ReLU → residual → bilinear ×2 (ℓ > 0)
//! head:    conv → tanh
//! ```
//!
//! Every convolution is 3×3, stride 1, zero padded. "NL" is plain batch norm in the
//! unconditional variant and [`CondNorm`] in the conditional one; class masks enter the
//! network only through those layers.
//!
//! The per-level widths are not recoverable from the published figure, so the default
//! schedule is the usual U-Net doubling `64/128/256` with `512` at the bridge.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cond_norm::{resize_mask_tensor, CondNorm, CondNormCache, DEFAULT_HIDDEN};
use crate::error::{dim_err, Error, Result};
use crate::image::{default_classes, ClassMaskStack, ImagePlane, RangeTag};
use crate::nn::activation::{relu, relu_backward, tanh, tanh_backward};
use crate::nn::pool::{max_pool2, max_pool2_backward, MaxPoolCache};
use crate::nn::resize::{bilinear, bilinear_backward};
use crate::nn::{join, BatchNorm2d, BatchNormCache, Conv3x3, Module, Param};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GanMode {
    /// Class-conditional normalization (C-GAN).
    #[serde(rename = "cgan")]
    Conditional,
    /// Plain batch normalization (U-GAN).
    #[serde(rename = "ugan")]
    Unconditional,
}

impl GanMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GanMode::Conditional => "cgan",
            GanMode::Unconditional => "ugan",
        }
    }
}

impl std::str::FromStr for GanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cgan" | "c-gan" => Ok(GanMode::Conditional),
            "ugan" | "u-gan" => Ok(GanMode::Unconditional),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected cgan or ugan"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub mode: GanMode,
    /// Widths of the down-sampling levels followed by the bridge width.
    pub channels: Vec<usize>,
    /// Class names in mask-channel order.
    pub classes: Vec<String>,
    /// Hidden width of the conditional-normalization branches.
    pub cond_hidden: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mode: GanMode::Conditional,
            channels: vec![64, 128, 256, 512],
            classes: default_classes(),
            cond_hidden: DEFAULT_HIDDEN,
        }
    }
}

impl GeneratorConfig {
    pub fn levels(&self) -> usize {
        self.channels.len().saturating_sub(1)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Spatial extents must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.levels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 {
            return Err(Error::Config(
                "channel schedule needs at least one level and a bridge width".into(),
            ));
        }
        if self.channels.contains(&0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.mode == GanMode::Conditional && (self.classes.is_empty() || self.cond_hidden == 0) {
            return Err(Error::Config(
                "conditional mode needs at least one class and a positive branch width".into(),
            ));
        }
        Ok(())
    }
}

/// The normalization slot ("NL") of residual and concatenation blocks.
#[derive(Clone, Debug)]
pub enum Norm<S> {
    Batch(BatchNorm2d<S>),
    Cond(CondNorm<S>),
}

#[derive(Clone, Debug)]
pub enum NormCache<S> {
    Batch(BatchNormCache<S>),
    Cond(CondNormCache<S>),
}

impl<S: Scalar> Norm<S> {
    fn new(cfg: &GeneratorConfig, features: usize, rng: &mut impl Rng) -> Self {
        match cfg.mode {
            GanMode::Unconditional => Norm::Batch(BatchNorm2d::new(features)),
            GanMode::Conditional => Norm::Cond(CondNorm::new(
                features,
                cfg.num_classes(),
                cfg.cond_hidden,
                rng,
            )),
        }
    }

    fn forward(&self, x: &Tensor<S>, masks: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        match self {
            Norm::Batch(bn) => bn.forward(x),
            Norm::Cond(cn) => cn.forward(x, masks.ok_or_else(missing_masks)?),
        }
    }

    fn forward_train(
        &mut self,
        x: &Tensor<S>,
        masks: Option<&Tensor<S>>,
    ) -> Result<(Tensor<S>, NormCache<S>)> {
        match self {
            Norm::Batch(bn) => bn.forward_train(x).map(|(y, c)| (y, NormCache::Batch(c))),
            Norm::Cond(cn) => cn
                .forward_train(x, masks.ok_or_else(missing_masks)?)
                .map(|(y, c)| (y, NormCache::Cond(c))),
        }
    }

    fn backward(&mut self, cache: &NormCache<S>, dy: &Tensor<S>) -> Tensor<S> {
        match (self, cache) {
            (Norm::Batch(bn), NormCache::Batch(c)) => bn.backward(c, dy),
            (Norm::Cond(cn), NormCache::Cond(c)) => cn.backward(c, dy),
            _ => unreachable!("normalization cache does not match its layer"),
        }
    }
}

impl<S: Scalar> Module<S> for Norm<S> {
    // Plain batch norm is visited under the same `bn` prefix as the batch norm inside a
    // conditional layer, so both variants share parameter names.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        match self {
            Norm::Batch(bn) => bn.visit(&join(prefix, "bn"), f),
            Norm::Cond(cn) => cn.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        match self {
            Norm::Batch(bn) => bn.visit_mut(&join(prefix, "bn"), f),
            Norm::Cond(cn) => cn.visit_mut(prefix, f),
        }
    }
}

fn missing_masks() -> Error {
    Error::Input("class masks are required in conditional mode".into())
}

/// `conv → NL → ReLU → conv → NL`, identity skip, ReLU after the sum.
#[derive(Clone, Debug)]
pub struct ResidualBlock<S> {
    pub conv1: Conv3x3<S>,
    pub norm1: Norm<S>,
    pub conv2: Conv3x3<S>,
    pub norm2: Norm<S>,
}

#[derive(Clone, Debug)]
struct ResidualCache<S> {
    input: Tensor<S>,
    norm1: NormCache<S>,
    act1: Tensor<S>,
    norm2: NormCache<S>,
    out: Tensor<S>,
}

impl<S: Scalar> ResidualBlock<S> {
    fn new(cfg: &GeneratorConfig, c: usize, rng: &mut impl Rng) -> Self {
        let conv1 = Conv3x3::new(c, c, 1, rng);
        let norm1 = Norm::new(cfg, c, rng);
        let conv2 = Conv3x3::new(c, c, 1, rng);
        let norm2 = Norm::new(cfg, c, rng);
        ResidualBlock {
            conv1,
            norm1,
            conv2,
            norm2,
        }
    }

    fn forward(&self, x: &Tensor<S>, masks: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        let a = relu(&self.norm1.forward(&self.conv1.forward(x)?, masks)?);
        let mut s = self.norm2.forward(&self.conv2.forward(&a)?, masks)?;
        s.add_assign(x);
        Ok(relu(&s))
    }

    fn forward_train(
        &mut self,
        x: &Tensor<S>,
        masks: Option<&Tensor<S>>,
    ) -> Result<(Tensor<S>, ResidualCache<S>)> {
        let h1 = self.conv1.forward(x)?;
        let (n1, norm1) = self.norm1.forward_train(&h1, masks)?;
        let act1 = relu(&n1);
        let h2 = self.conv2.forward(&act1)?;
        let (mut s, norm2) = self.norm2.forward_train(&h2, masks)?;
        s.add_assign(x);
        let out = relu(&s);
        Ok((
            out.clone(),
            ResidualCache {
                input: x.clone(),
                norm1,
                act1,
                norm2,
                out,
            },
        ))
    }

    fn backward(&mut self, cache: &ResidualCache<S>, dy: &Tensor<S>) -> Tensor<S> {
        let ds = relu_backward(&cache.out, dy);
        let dh2 = self.norm2.backward(&cache.norm2, &ds);
        let da = self.conv2.backward(&cache.act1, &dh2);
        let dn1 = relu_backward(&cache.act1, &da);
        let dh1 = self.norm1.backward(&cache.norm1, &dn1);
        let mut dx = self.conv1.backward(&cache.input, &dh1);
        dx.add_assign(&ds);
        dx
    }
}

impl<S: Scalar> Module<S> for ResidualBlock<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
    }
}

/// `conv → residual`, the shared stem of down-sampling blocks and the bridge.
#[derive(Clone, Debug)]
pub struct ConvResidual<S> {
    pub conv: Conv3x3<S>,
    pub res: ResidualBlock<S>,
}

#[derive(Clone, Debug)]
struct ConvResidualCache<S> {
    input: Tensor<S>,
    res: ResidualCache<S>,
}

impl<S: Scalar> ConvResidual<S> {
    fn new(cfg: &GeneratorConfig, cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        let conv = Conv3x3::new(cin, cout, 1, rng);
        let res = ResidualBlock::new(cfg, cout, rng);
        ConvResidual { conv, res }
    }

    fn forward(&self, x: &Tensor<S>, masks: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        self.res.forward(&self.conv.forward(x)?, masks)
    }

    fn forward_train(
        &mut self,
        x: &Tensor<S>,
        masks: Option<&Tensor<S>>,
    ) -> Result<(Tensor<S>, ConvResidualCache<S>)> {
        let h = self.conv.forward(x)?;
        let (y, res) = self.res.forward_train(&h, masks)?;
        Ok((
            y,
            ConvResidualCache {
                input: x.clone(),
                res,
            },
        ))
    }

    fn backward(
        &mut self,
        cache: &ConvResidualCache<S>,
        dy: &Tensor<S>,
        need_input_grad: bool,
    ) -> Option<Tensor<S>> {
        let dh = self.res.backward(&cache.res, dy);
        if need_input_grad {
            Some(self.conv.backward(&cache.input, &dh))
        } else {
            self.conv.backward_params(&cache.input, &dh);
            None
        }
    }
}

impl<S: Scalar> Module<S> for ConvResidual<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.res.visit(&join(prefix, "res"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.res.visit_mut(&join(prefix, "res"), f);
    }
}

/// Concatenation block followed by a residual block.
#[derive(Clone, Debug)]
pub struct UpBlock<S> {
    pub merge: Conv3x3<S>,
    pub merge_norm: Norm<S>,
    pub res: ResidualBlock<S>,
    skip_channels: usize,
}

#[derive(Clone, Debug)]
struct UpCache<S> {
    merged_input: Tensor<S>,
    norm: NormCache<S>,
    act: Tensor<S>,
    res: ResidualCache<S>,
}

impl<S: Scalar> UpBlock<S> {
    fn new(cfg: &GeneratorConfig, skip: usize, incoming: usize, rng: &mut impl Rng) -> Self {
        let merge = Conv3x3::new(skip + incoming, skip, 1, rng);
        let merge_norm = Norm::new(cfg, skip, rng);
        let res = ResidualBlock::new(cfg, skip, rng);
        UpBlock {
            merge,
            merge_norm,
            res,
            skip_channels: skip,
        }
    }

    fn forward(
        &self,
        skip: &Tensor<S>,
        up: &Tensor<S>,
        masks: Option<&Tensor<S>>,
    ) -> Result<Tensor<S>> {
        let cat = Tensor::concat_channels(skip, up)?;
        let a = relu(&self.merge_norm.forward(&self.merge.forward(&cat)?, masks)?);
        self.res.forward(&a, masks)
    }

    fn forward_train(
        &mut self,
        skip: &Tensor<S>,
        up: &Tensor<S>,
        masks: Option<&Tensor<S>>,
    ) -> Result<(Tensor<S>, UpCache<S>)> {
        let merged_input = Tensor::concat_channels(skip, up)?;
        let (n, norm) = self
            .merge_norm
            .forward_train(&self.merge.forward(&merged_input)?, masks)?;
        let act = relu(&n);
        let (y, res) = self.res.forward_train(&act, masks)?;
        Ok((
            y,
            UpCache {
                merged_input,
                norm,
                act,
                res,
            },
        ))
    }

    /// Returns the gradients for the skip input and the up-sampled input.
    fn backward(&mut self, cache: &UpCache<S>, dy: &Tensor<S>) -> (Tensor<S>, Tensor<S>) {
        let da = self.res.backward(&cache.res, dy);
        let dn = relu_backward(&cache.act, &da);
        let dh = self.merge_norm.backward(&cache.norm, &dn);
        let dcat = self.merge.backward(&cache.merged_input, &dh);
        dcat.split_channels(self.skip_channels)
    }
}

impl<S: Scalar> Module<S> for UpBlock<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.merge.visit(&join(prefix, "merge"), f);
        self.merge_norm.visit(&join(prefix, "merge_norm"), f);
        self.res.visit(&join(prefix, "res"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.merge.visit_mut(&join(prefix, "merge"), f);
        self.merge_norm.visit_mut(&join(prefix, "merge_norm"), f);
        self.res.visit_mut(&join(prefix, "res"), f);
    }
}

#[derive(Clone, Debug)]
pub struct Generator<S> {
    cfg: GeneratorConfig,
    pub down: Vec<ConvResidual<S>>,
    pub bridge: ConvResidual<S>,
    /// Ordered from the deepest level to the shallowest.
    pub up: Vec<UpBlock<S>>,
    pub head: Conv3x3<S>,
}

/// Intermediate tensors of an instrumented forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardTrace<S> {
    /// Skip features per down level, shallowest first.
    pub skips: Vec<Tensor<S>>,
    /// `(skip, up-sampled)` operands of each concatenation, deepest first.
    pub concat_inputs: Vec<(Tensor<S>, Tensor<S>)>,
}

pub struct GeneratorCache<S> {
    down: Vec<(ConvResidualCache<S>, MaxPoolCache)>,
    bridge: ConvResidualCache<S>,
    bridge_out_shape: [usize; 4],
    up: Vec<(UpCache<S>, Option<[usize; 4]>)>,
    head_input: Tensor<S>,
    out: Tensor<S>,
}

impl<S: Scalar> Generator<S> {
    /// Random initialization (uniform `±1/sqrt(fan_in)` weights, zero biases, unit/zero
    /// batch-norm affine terms). The parameter layout depends only on `cfg`.
    pub fn new(cfg: GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let ch = &cfg.channels;
        let levels = cfg.levels();
        let down = (0..levels)
            .map(|l| ConvResidual::new(&cfg, if l == 0 { 1 } else { ch[l - 1] }, ch[l], rng))
            .collect();
        let bridge = ConvResidual::new(&cfg, ch[levels - 1], ch[levels], rng);
        let up = (0..levels)
            .rev()
            .map(|l| UpBlock::new(&cfg, ch[l], ch[l + 1], rng))
            .collect();
        let head = Conv3x3::new(ch[0], 1, 1, rng);
        Ok(Generator {
            cfg,
            down,
            bridge,
            up,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn mode(&self) -> GanMode {
        self.cfg.mode
    }

    /// Sets every conditional branch to `S ≡ 1, T ≡ 0`.
    pub fn neutralize_conditioning(&mut self) {
        let mut norms: Vec<&mut Norm<S>> = Vec::new();
        for b in self
            .down
            .iter_mut()
            .chain(std::iter::once(&mut self.bridge))
        {
            norms.push(&mut b.res.norm1);
            norms.push(&mut b.res.norm2);
        }
        for u in &mut self.up {
            norms.push(&mut u.merge_norm);
            norms.push(&mut u.res.norm1);
            norms.push(&mut u.res.norm2);
        }
        for n in norms {
            if let Norm::Cond(c) = n {
                c.neutralize();
            }
        }
    }

    fn check_input(&self, x: &Tensor<S>, masks: Option<&Tensor<S>>) -> Result<()> {
        let m = self.cfg.size_multiple();
        if x.channels() != 1 {
            return Err(dim_err!(
                "generator expects 1 input channel, got {}",
                x.channels()
            ));
        }
        if x.height() % m != 0 || x.width() % m != 0 || x.height() == 0 || x.width() == 0 {
            return Err(dim_err!(
                "input {}x{} is not divisible by {m}",
                x.height(),
                x.width()
            ));
        }
        if self.cfg.mode == GanMode::Conditional {
            let masks = masks.ok_or_else(missing_masks)?;
            if masks.channels() != self.cfg.num_classes() {
                return Err(Error::Input(format!(
                    "expected {} mask channels, got {}",
                    self.cfg.num_classes(),
                    masks.channels()
                )));
            }
            if masks.batch() != x.batch()
                || masks.height() != x.height()
                || masks.width() != x.width()
            {
                return Err(dim_err!(
                    "masks {:?} do not match input {:?}",
                    masks.shape(),
                    x.shape()
                ));
            }
        }
        Ok(())
    }

    /// Masks at every resolution level, computed once per pass (`None` without conditioning).
    fn mask_pyramid(
        &self,
        x: &Tensor<S>,
        masks: Option<&Tensor<S>>,
    ) -> Result<Vec<Option<Tensor<S>>>> {
        (0..=self.cfg.levels())
            .map(|l| match (self.cfg.mode, masks) {
                (GanMode::Conditional, Some(m)) => {
                    resize_mask_tensor(m, x.height() >> l, x.width() >> l).map(Some)
                }
                _ => Ok(None),
            })
            .collect()
    }

    /// Evaluation-mode forward pass on a `[N, 1, H, W]` signed-range batch.
    pub fn forward(&self, x: &Tensor<S>, masks: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        self.forward_traced(x, masks, None)
    }

    pub fn forward_traced(
        &self,
        x: &Tensor<S>,
        masks: Option<&Tensor<S>>,
        mut trace: Option<&mut ForwardTrace<S>>,
    ) -> Result<Tensor<S>> {
        self.check_input(x, masks)?;
        let pyramid = self.mask_pyramid(x, masks)?;
        let levels = self.cfg.levels();
        let mut skips = Vec::with_capacity(levels);
        let mut h = x.clone();
        for (l, block) in self.down.iter().enumerate() {
            let s = block.forward(&h, pyramid[l].as_ref())?;
            h = max_pool2(&s)?.0;
            skips.push(s);
        }
        let b = self.bridge.forward(&h, pyramid[levels].as_ref())?;
        let mut h = bilinear(&b, b.height() * 2, b.width() * 2);
        for (i, block) in self.up.iter().enumerate() {
            let l = levels - 1 - i;
            if let Some(t) = trace.as_deref_mut() {
                t.concat_inputs.push((skips[l].clone(), h.clone()));
            }
            let y = block.forward(&skips[l], &h, pyramid[l].as_ref())?;
            h = if l > 0 {
                bilinear(&y, y.height() * 2, y.width() * 2)
            } else {
                y
            };
        }
        if let Some(t) = trace {
            t.skips = skips;
        }
        Ok(tanh(&self.head.forward(&h)?))
    }

    /// Training-mode forward pass; batch statistics drive every normalization layer.
    pub fn forward_train(
        &mut self,
        x: &Tensor<S>,
        masks: Option<&Tensor<S>>,
    ) -> Result<(Tensor<S>, GeneratorCache<S>)> {
        self.check_input(x, masks)?;
        let pyramid = self.mask_pyramid(x, masks)?;
        let levels = self.cfg.levels();
        let mut skips = Vec::with_capacity(levels);
        let mut down_caches = Vec::with_capacity(levels);
        let mut h = x.clone();
        for (l, block) in self.down.iter_mut().enumerate() {
            let (s, c) = block.forward_train(&h, pyramid[l].as_ref())?;
            let (p, pc) = max_pool2(&s)?;
            h = p;
            skips.push(s);
            down_caches.push((c, pc));
        }
        let (b, bridge) = self.bridge.forward_train(&h, pyramid[levels].as_ref())?;
        let bridge_out_shape = b.shape();
        let mut h = bilinear(&b, b.height() * 2, b.width() * 2);
        let mut up_caches = Vec::with_capacity(levels);
        for (i, block) in self.up.iter_mut().enumerate() {
            let l = levels - 1 - i;
            let (y, c) = block.forward_train(&skips[l], &h, pyramid[l].as_ref())?;
            if l > 0 {
                h = bilinear(&y, y.height() * 2, y.width() * 2);
                up_caches.push((c, Some(y.shape())));
            } else {
                h = y;
                up_caches.push((c, None));
            }
        }
        let out = tanh(&self.head.forward(&h)?);
        Ok((
            out.clone(),
            GeneratorCache {
                down: down_caches,
                bridge,
                bridge_out_shape,
                up: up_caches,
                head_input: h,
                out,
            },
        ))
    }

    /// Backpropagates `d_out` (gradient w.r.t. the tanh output), accumulating parameter gradients.
    pub fn backward(&mut self, cache: &GeneratorCache<S>, d_out: &Tensor<S>) {
        let levels = self.cfg.levels();
        let dz = tanh_backward(&cache.out, d_out);
        let mut dh = self.head.backward(&cache.head_input, &dz);
        let mut d_skips: Vec<Option<Tensor<S>>> = vec![None; levels];
        for (i, block) in self.up.iter_mut().enumerate().rev() {
            let l = levels - 1 - i;
            let (c, up_shape) = &cache.up[i];
            let dy = match up_shape {
                Some(shape) => bilinear_backward(*shape, &dh),
                None => dh.clone(),
            };
            let (d_skip, d_up) = block.backward(c, &dy);
            d_skips[l] = Some(d_skip);
            dh = d_up;
        }
        // after the loop dh is the gradient of the up-sampled bridge output
        let db = bilinear_backward(cache.bridge_out_shape, &dh);
        let mut dh = self
            .bridge
            .backward(&cache.bridge, &db, true)
            .expect("input gradient");
        for (l, block) in self.down.iter_mut().enumerate().rev() {
            let (c, pc) = &cache.down[l];
            let mut ds = max_pool2_backward(pc, &dh);
            ds.add_assign(d_skips[l].as_ref().expect("skip gradient"));
            match block.backward(c, &ds, l > 0) {
                Some(g) => dh = g,
                None => break,
            }
        }
    }

    /// Convenience wrapper for a single plane; returns a signed-range plane.
    pub fn generate(&self, lr: &ImagePlane, masks: Option<&ClassMaskStack>) -> Result<ImagePlane> {
        let x = lr.to_signed().to_tensor::<S>();
        let m = match (self.cfg.mode, masks) {
            (GanMode::Conditional, Some(m)) => {
                m.check_aligned(lr)?;
                if m.classes() != self.cfg.classes.as_slice() {
                    return Err(Error::Config(format!(
                        "mask classes {:?} differ from the model's {:?}",
                        m.classes(),
                        self.cfg.classes
                    )));
                }
                Some(m.to_tensor::<S>())
            }
            (GanMode::Conditional, None) => return Err(missing_masks()),
            _ => None,
        };
        let y = self.forward(&x, m.as_ref())?;
        ImagePlane::from_tensor(&y, 0, RangeTag::Signed)
    }
}

impl<S: Scalar> Module<S> for Generator<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        for (i, b) in self.down.iter().enumerate() {
            b.visit(&join(prefix, &format!("down.{i}")), f);
        }
        self.bridge.visit(&join(prefix, "bridge"), f);
        for (i, b) in self.up.iter().enumerate() {
            b.visit(&join(prefix, &format!("up.{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        for (i, b) in self.down.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("down.{i}")), f);
        }
        self.bridge.visit_mut(&join(prefix, "bridge"), f);
        for (i, b) in self.up.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("up.{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
