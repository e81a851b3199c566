//! The HR → LR degradation model: Gaussian blur, bilinear down-sampling and
//! nearest-neighbour up-sampling back to the source grid.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::image::ImagePlane;
use crate::nn::resize::{linear_taps, nearest_index};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    Bilinear,
    Nearest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Down,
    Up,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationParams {
    pub blur_sigma: f64,
    pub down_factor: usize,
    pub down_mode: ResampleMode,
    pub up_mode: ResampleMode,
    pub invert: bool,
}

impl Default for DegradationParams {
    fn default() -> Self {
        DegradationParams {
            blur_sigma: 3.0,
            down_factor: 8,
            down_mode: ResampleMode::Bilinear,
            up_mode: ResampleMode::Nearest,
            invert: true,
        }
    }
}

impl DegradationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma > 0.0) || !self.blur_sigma.is_finite() {
            return Err(Error::Parameter(format!(
                "blur sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if self.down_factor < 1 {
            return Err(Error::Parameter(
                "down-sampling factor must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Half-sample symmetric reflection of an arbitrary index into `[0, n)`:
/// `… b a | a b c … y z | z y …`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Normalized 1-D Gaussian taps on `[-r, r]` with `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Separable Gaussian blur with reflect-padded borders.
pub fn gaussian_blur(img: &ImagePlane, sigma: f64) -> Result<ImagePlane> {
    let kernel = gaussian_kernel(sigma)?;
    let r = (kernel.len() / 2) as isize;
    let (h, w) = img.dims();
    let src = img.values();
    let mut tmp = vec![0.0f64; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(t, k)| k * row[reflect_index(x as isize + t as isize - r, w)] as f64)
                .sum();
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(t, k)| k * tmp[reflect_index(y as isize + t as isize - r, h) * w + x])
                .sum();
            out[y * w + x] = v as f32;
        }
    }
    ImagePlane::clamped(h, w, out, img.range())
}

/// Integer-factor resampling. Down-sampling requires both extents divisible by `factor`.
pub fn resample(
    img: &ImagePlane,
    factor: usize,
    direction: Direction,
    mode: ResampleMode,
) -> Result<ImagePlane> {
    if factor == 0 {
        return Err(Error::Parameter(
            "resampling factor must be at least 1".into(),
        ));
    }
    let (h, w) = img.dims();
    let (oh, ow) = match direction {
        Direction::Down => {
            if h % factor != 0 || w % factor != 0 {
                return Err(dim_err!(
                    "{h}x{w} is not divisible by down-sampling factor {factor}"
                ));
            }
            (h / factor, w / factor)
        }
        Direction::Up => (h * factor, w * factor),
    };
    let src = img.values();
    let out = match mode {
        ResampleMode::Nearest => {
            let iy = nearest_index(h, oh);
            let ix = nearest_index(w, ow);
            iy.iter()
                .flat_map(|&sy| ix.iter().map(move |&sx| src[sy * w + sx]))
                .collect()
        }
        ResampleMode::Bilinear => {
            let ty = linear_taps(h, oh);
            let tx = linear_taps(w, ow);
            let mut out = Vec::with_capacity(oh * ow);
            for t in &ty {
                for u in &tx {
                    let top = src[t.lo * w + u.lo] as f64 * (1.0 - u.w)
                        + src[t.lo * w + u.hi] as f64 * u.w;
                    let bot = src[t.hi * w + u.lo] as f64 * (1.0 - u.w)
                        + src[t.hi * w + u.hi] as f64 * u.w;
                    out.push((top * (1.0 - t.w) + bot * t.w) as f32);
                }
            }
            out
        }
    };
    ImagePlane::clamped(oh, ow, out, img.range())
}

/// Blur, then down-sample, then up-sample back to the source grid.
pub fn degrade(hr: &ImagePlane, deg: &DegradationParams) -> Result<ImagePlane> {
    deg.validate()?;
    let blurred = gaussian_blur(hr, deg.blur_sigma)?;
    let low = resample(&blurred, deg.down_factor, Direction::Down, deg.down_mode)?;
    resample(&low, deg.down_factor, Direction::Up, deg.up_mode)
}
