//! Class-conditional normalization.
//!
//! Activations are batch-normalized, then modulated per pixel:
//! `y = BN(x) ⊙ S(masks) + T(masks)`, where the scale map `S` and shift map `T` each
//! come from their own `conv3×3 → ReLU → conv3×3` branch over the class masks. Both
//! branches end with as many channels as `x` has.

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::image::ClassMaskStack;
use crate::nn::activation::{relu, relu_backward};
use crate::nn::resize::{nearest, nearest_index};
use crate::nn::{join, BatchNorm2d, BatchNormCache, Conv3x3, Module, Param};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_HIDDEN: usize = 64;

/// Nearest-neighbour resize of a mask stack to a coarser grid with the same integer
/// factor along both axes. Outputs remain binary.
pub fn resize_masks(
    masks: &ClassMaskStack,
    target_h: usize,
    target_w: usize,
) -> Result<ClassMaskStack> {
    let (h, w) = masks.dims();
    check_factor(h, w, target_h, target_w)?;
    let iy = nearest_index(h, target_h);
    let ix = nearest_index(w, target_w);
    let planes = (0..masks.num_classes())
        .map(|k| {
            let p = masks.plane(k);
            iy.iter()
                .flat_map(|&y| ix.iter().map(move |&x| p[y * w + x]))
                .collect()
        })
        .collect();
    ClassMaskStack::new(masks.classes().to_vec(), target_h, target_w, planes)
}

fn check_factor(h: usize, w: usize, th: usize, tw: usize) -> Result<()> {
    if th == 0 || tw == 0 || th > h || tw > w || h % th != 0 || w % tw != 0 || h / th != w / tw {
        return Err(dim_err!(
            "cannot resize {h}x{w} masks to {th}x{tw}: extents must shrink by one integer factor"
        ));
    }
    Ok(())
}

/// Tensor form of [`resize_masks`] for a `[N, K, H, W]` batch.
pub fn resize_mask_tensor<S: Scalar>(
    masks: &Tensor<S>,
    target_h: usize,
    target_w: usize,
) -> Result<Tensor<S>> {
    check_factor(masks.height(), masks.width(), target_h, target_w)?;
    if (masks.height(), masks.width()) == (target_h, target_w) {
        return Ok(masks.clone());
    }
    Ok(nearest(masks, target_h, target_w))
}

/// `conv → ReLU → conv` over the mask channels.
#[derive(Clone, Debug)]
pub struct MaskBranch<S> {
    pub hidden: Conv3x3<S>,
    pub out: Conv3x3<S>,
}

#[derive(Clone, Debug)]
struct BranchCache<S> {
    activated: Tensor<S>,
}

impl<S: Scalar> MaskBranch<S> {
    fn new(classes: usize, hidden: usize, features: usize, rng: &mut impl Rng) -> Self {
        MaskBranch {
            hidden: Conv3x3::new(classes, hidden, 1, rng),
            out: Conv3x3::new(hidden, features, 1, rng),
        }
    }

    fn forward(&self, masks: &Tensor<S>) -> Result<(Tensor<S>, BranchCache<S>)> {
        let activated = relu(&self.hidden.forward(masks)?);
        let y = self.out.forward(&activated)?;
        Ok((y, BranchCache { activated }))
    }

    fn backward(&mut self, masks: &Tensor<S>, cache: &BranchCache<S>, dy: &Tensor<S>) {
        let da = self.out.backward(&cache.activated, dy);
        let dh = relu_backward(&cache.activated, &da);
        self.hidden.backward_params(masks, &dh);
    }

    /// Constant output `value` regardless of the masks.
    fn set_constant(&mut self, value: f64) {
        self.out
            .weight
            .value
            .iter_mut()
            .for_each(|w| *w = S::zero());
        self.out
            .bias
            .value
            .iter_mut()
            .for_each(|b| *b = S::lit(value));
    }
}

impl<S: Scalar> Module<S> for MaskBranch<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.hidden.visit(&join(prefix, "hidden"), f);
        self.out.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.hidden.visit_mut(&join(prefix, "hidden"), f);
        self.out.visit_mut(&join(prefix, "out"), f);
    }
}

#[derive(Clone, Debug)]
pub struct CondNorm<S> {
    pub bn: BatchNorm2d<S>,
    pub scale: MaskBranch<S>,
    pub shift: MaskBranch<S>,
    num_classes: usize,
}

#[derive(Clone, Debug)]
pub struct CondNormCache<S> {
    bn: BatchNormCache<S>,
    normalized: Tensor<S>,
    scale_map: Tensor<S>,
    scale: BranchCache<S>,
    shift: BranchCache<S>,
    masks: Tensor<S>,
}

impl<S: Scalar> CondNorm<S> {
    /// Branch convolutions use the default random scheme, except that the scale branch's
    /// output bias starts at one so a fresh layer begins close to plain batch norm.
    pub fn new(features: usize, num_classes: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let scale = MaskBranch::new(num_classes, hidden, features, rng);
        let shift = MaskBranch::new(num_classes, hidden, features, rng);
        let mut layer = CondNorm {
            bn: BatchNorm2d::new(features),
            scale,
            shift,
            num_classes,
        };
        layer
            .scale
            .out
            .bias
            .value
            .iter_mut()
            .for_each(|b| *b = S::one());
        layer
    }

    pub fn num_features(&self) -> usize {
        self.bn.channels()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Makes both branches mask-independent (`S ≡ 1`, `T ≡ 0`), reducing the layer to batch norm.
    pub fn neutralize(&mut self) {
        self.scale.set_constant(1.0);
        self.shift.set_constant(0.0);
    }

    fn check(&self, x: &Tensor<S>, masks: &Tensor<S>) -> Result<()> {
        if x.channels() != self.num_features() {
            return Err(dim_err!(
                "conditional norm over {} features got {} channels",
                self.num_features(),
                x.channels()
            ));
        }
        if masks.channels() != self.num_classes {
            return Err(Error::Input(format!(
                "expected {} mask channels, got {}",
                self.num_classes,
                masks.channels()
            )));
        }
        if masks.batch() != x.batch() || masks.height() != x.height() || masks.width() != x.width()
        {
            return Err(dim_err!(
                "masks {:?} not resized to features {:?}",
                masks.shape(),
                x.shape()
            ));
        }
        Ok(())
    }

    fn modulate(normalized: &Tensor<S>, scale: &Tensor<S>, shift: &Tensor<S>) -> Tensor<S> {
        let mut y = normalized.zip_map(scale, |a, b| a * b);
        y.add_assign(shift);
        y
    }

    /// Evaluation path: running statistics.
    pub fn forward(&self, x: &Tensor<S>, masks: &Tensor<S>) -> Result<Tensor<S>> {
        self.check(x, masks)?;
        let normalized = self.bn.forward(x)?;
        let (s, _) = self.scale.forward(masks)?;
        let (t, _) = self.shift.forward(masks)?;
        Ok(Self::modulate(&normalized, &s, &t))
    }

    /// Training path: batch statistics; updates the running estimates.
    pub fn forward_train(
        &mut self,
        x: &Tensor<S>,
        masks: &Tensor<S>,
    ) -> Result<(Tensor<S>, CondNormCache<S>)> {
        self.check(x, masks)?;
        let (normalized, bn) = self.bn.forward_train(x)?;
        let (s, scale) = self.scale.forward(masks)?;
        let (t, shift) = self.shift.forward(masks)?;
        let y = Self::modulate(&normalized, &s, &t);
        Ok((
            y,
            CondNormCache {
                bn,
                normalized,
                scale_map: s,
                scale,
                shift,
                masks: masks.clone(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &CondNormCache<S>, dy: &Tensor<S>) -> Tensor<S> {
        let d_scale = dy.zip_map(&cache.normalized, |g, n| g * n);
        let d_norm = dy.zip_map(&cache.scale_map, |g, s| g * s);
        self.scale.backward(&cache.masks, &cache.scale, &d_scale);
        self.shift.backward(&cache.masks, &cache.shift, dy);
        self.bn.backward(&cache.bn, &d_norm)
    }
}

impl<S: Scalar> Module<S> for CondNorm<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.bn.visit(&join(prefix, "bn"), f);
        self.scale.visit(&join(prefix, "scale"), f);
        self.shift.visit(&join(prefix, "shift"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.bn.visit_mut(&join(prefix, "bn"), f);
        self.scale.visit_mut(&join(prefix, "scale"), f);
        self.shift.visit_mut(&join(prefix, "shift"), f);
    }
}
