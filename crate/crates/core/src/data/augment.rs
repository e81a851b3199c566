//! Training-pair simulation: channel pick, inversion, contrast exponent, rotation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::degrade::{degrade, reflect_index, DegradationParams};
use crate::error::{Error, Result};
use crate::image::{ClassMaskStack, ColorImage, ImagePlane, RangeTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationParams {
    /// Rotation angle is drawn uniformly from `[0, rotation_range]` degrees.
    pub rotation_range: f64,
    /// Contrast exponent is drawn uniformly from `[min, max]`.
    pub exponent_range: (f64, f64),
}

impl Default for AugmentationParams {
    fn default() -> Self {
        AugmentationParams {
            rotation_range: 180.0,
            exponent_range: (0.25, 4.0),
        }
    }
}

impl AugmentationParams {
    /// No rotation and a fixed exponent of one.
    pub fn identity() -> Self {
        AugmentationParams {
            rotation_range: 0.0,
            exponent_range: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.rotation_range) {
            return Err(Error::Parameter(format!(
                "rotation range must lie in [0, 180] degrees, got {}",
                self.rotation_range
            )));
        }
        let (lo, hi) = self.exponent_range;
        if !(lo > 0.0 && lo <= hi && hi <= 4.0) {
            return Err(Error::Parameter(format!(
                "exponent range must satisfy 0 < min <= max <= 4, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    pub fn draw_angle(&self, rng: &mut impl Rng) -> f64 {
        if self.rotation_range > 0.0 {
            rng.random_range(0.0..=self.rotation_range)
        } else {
            0.0
        }
    }

    pub fn draw_exponent(&self, rng: &mut impl Rng) -> f64 {
        let (lo, hi) = self.exponent_range;
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    }
}

pub fn invert(img: &ImagePlane) -> ImagePlane {
    let v = img.values().iter().map(|v| 1.0 - v).collect();
    ImagePlane::clamped(img.height(), img.width(), v, RangeTag::Unit).expect("same extents")
}

pub fn apply_exponent(img: &ImagePlane, exponent: f64) -> ImagePlane {
    let v = img
        .values()
        .iter()
        .map(|&v| (v as f64).powf(exponent) as f32)
        .collect();
    ImagePlane::clamped(img.height(), img.width(), v, RangeTag::Unit).expect("same extents")
}

/// Source coordinate of output pixel `(y, x)` under a rotation by `angle_deg` about the centre.
fn rotation_source(y: usize, x: usize, h: usize, w: usize, angle_deg: f64) -> (f64, f64) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (dy, dx) = (y as f64 - cy, x as f64 - cx);
    (cy + c * dy - s * dx, cx + s * dy + c * dx)
}

/// Bilinear rotation about the image centre with reflect-padded borders.
pub fn rotate_bilinear(img: &ImagePlane, angle_deg: f64) -> ImagePlane {
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (h, w) = img.dims();
    let src = img.values();
    let at = |y: isize, x: isize| src[reflect_index(y, h) * w + reflect_index(x, w)] as f64;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = rotation_source(y, x, h, w, angle_deg);
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let (y0, x0) = (y0 as isize, x0 as isize);
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bot = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out.push((top * (1.0 - fy) + bot * fy) as f32);
        }
    }
    ImagePlane::clamped(h, w, out, img.range()).expect("same extents")
}

/// Nearest-neighbour rotation; keeps masks binary.
pub fn rotate_masks(masks: &ClassMaskStack, angle_deg: f64) -> ClassMaskStack {
    if angle_deg == 0.0 {
        return masks.clone();
    }
    let (h, w) = masks.dims();
    let index: Vec<usize> = (0..h * w)
        .map(|i| {
            let (sy, sx) = rotation_source(i / w, i % w, h, w, angle_deg);
            let yy = reflect_index(sy.round() as isize, h);
            let xx = reflect_index(sx.round() as isize, w);
            yy * w + xx
        })
        .collect();
    let planes = (0..masks.num_classes())
        .map(|k| {
            let p = masks.plane(k);
            index.iter().map(|&i| p[i]).collect()
        })
        .collect();
    ClassMaskStack::new(masks.classes().to_vec(), h, w, planes).expect("same extents")
}

/// Rotates all color channels and the mask stack by the same angle.
pub fn rotate_sample(
    color: &ColorImage,
    masks: &ClassMaskStack,
    angle_deg: f64,
) -> (ColorImage, ClassMaskStack) {
    let channels = color
        .channels
        .clone()
        .map(|c| rotate_bilinear(&c, angle_deg));
    (ColorImage { channels }, rotate_masks(masks, angle_deg))
}

/// Deterministic core of [`simulate_lr`] for an explicit channel and exponent.
pub fn simulate_pair(
    hr_color: &ColorImage,
    deg: &DegradationParams,
    channel: usize,
    exponent: f64,
) -> Result<(ImagePlane, ImagePlane)> {
    deg.validate()?;
    if channel > 2 {
        return Err(Error::Parameter(format!(
            "channel index {channel} out of range"
        )));
    }
    let (h, w) = hr_color.dims();
    let f = deg.down_factor;
    if h % f != 0 || w % f != 0 {
        return Err(Error::Dimension(format!(
            "{h}x{w} is not divisible by down-sampling factor {f}"
        )));
    }
    let gray = &hr_color.channels[channel];
    let gray = if deg.invert {
        invert(gray)
    } else {
        gray.clone()
    };
    let hr = apply_exponent(&gray, exponent);
    let lr = degrade(&hr, deg)?;
    Ok((lr, hr))
}

/// Simulates a paired (LR, HR) grayscale sample from an HR color image.
///
/// Order: random channel, inversion, one shared contrast exponent for both planes,
/// then blur/down/up on the LR branch only.
pub fn simulate_lr(
    hr_color: &ColorImage,
    deg: &DegradationParams,
    aug: &AugmentationParams,
    rng: &mut impl Rng,
) -> Result<(ImagePlane, ImagePlane)> {
    aug.validate()?;
    let channel = rng.random_range(0..3);
    let exponent = aug.draw_exponent(rng);
    simulate_pair(hr_color, deg, channel, exponent)
}
