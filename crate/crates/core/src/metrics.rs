//! Image-quality metrics on unit-range planes (peak value 1).

use crate::data::degrade::reflect_index;
use crate::error::{dim_err, Result};
use crate::image::{ImagePlane, RangeTag};

const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_pair(a: &ImagePlane, b: &ImagePlane) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(dim_err!(
            "images differ in size: {:?} vs {:?}",
            a.dims(),
            b.dims()
        ));
    }
    Ok(())
}

fn unit_values(p: &ImagePlane) -> Vec<f64> {
    p.to_unit().values().iter().map(|&v| v as f64).collect()
}

pub fn mse(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    check_pair(a, b)?;
    let (x, y) = (unit_values(a), unit_values(b));
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len().max(1) as f64)
}

/// `10·log10(1/MSE)`; `+∞` for identical images.
pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Separable filter with half-sample symmetric borders.
fn filter(v: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, &kw)| kw * v[y * w + reflect_index(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, &kw)| kw * tmp[reflect_index(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Structural similarity with an 11×11 Gaussian window (σ = 1.5), sample covariances and
/// the mean taken over the region at least 5 pixels from the border.
pub fn ssim(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    check_pair(a, b)?;
    let (h, w) = a.dims();
    if h < 2 * SSIM_RADIUS + 1 || w < 2 * SSIM_RADIUS + 1 {
        return Err(dim_err!("SSIM needs at least 11x11 images, got {h}x{w}"));
    }
    let k: Vec<f64> = {
        let r = SSIM_RADIUS as isize;
        let raw: Vec<f64> = (-r..=r)
            .map(|d| (-0.5 * (d * d) as f64 / (SSIM_SIGMA * SSIM_SIGMA)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    let (x, y) = (unit_values(a), unit_values(b));
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (ux, uy) = (filter(&x, h, w, &k), filter(&y, h, w, &k));
    let (uxx, uyy, uxy) = (
        filter(&xx, h, w, &k),
        filter(&yy, h, w, &k),
        filter(&xy, h, w, &k),
    );
    let np = ((2 * SSIM_RADIUS + 1) * (2 * SSIM_RADIUS + 1)) as f64;
    let cov_norm = np / (np - 1.0);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    let mut count = 0usize;
    for r in SSIM_RADIUS..h - SSIM_RADIUS {
        for c in SSIM_RADIUS..w - SSIM_RADIUS {
            let i = r * w + c;
            let vx = cov_norm * (uxx[i] - ux[i] * ux[i]);
            let vy = cov_norm * (uyy[i] - uy[i] * uy[i]);
            let vxy = cov_norm * (uxy[i] - ux[i] * uy[i]);
            let num = (2.0 * ux[i] * uy[i] + c1) * (2.0 * vxy + c2);
            let den = (ux[i] * ux[i] + uy[i] * uy[i] + c1) * (vx + vy + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean squared response of the 4-neighbour Laplacian; a proxy for high-frequency content.
pub fn laplacian_energy(p: &ImagePlane) -> f64 {
    let (h, w) = p.dims();
    let v = unit_values(p);
    let at = |y: isize, x: isize| v[reflect_index(y, h) * w + reflect_index(x, w)];
    let mut total = 0.0;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let l = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * at(y, x);
            total += l * l;
        }
    }
    total / (h * w).max(1) as f64
}

/// Places equally tall planes side by side (unit range) with a 4-pixel white gutter.
pub fn comparison_panel(planes: &[&ImagePlane]) -> Result<ImagePlane> {
    const GUTTER: usize = 4;
    let Some(first) = planes.first() else {
        return Err(dim_err!("a panel needs at least one image"));
    };
    let h = first.height();
    if planes.iter().any(|p| p.height() != h) {
        return Err(dim_err!("panel images must share a height"));
    }
    let total_w = planes.iter().map(|p| p.width()).sum::<usize>() + GUTTER * (planes.len() - 1);
    let mut out = vec![1.0f32; h * total_w];
    let mut left = 0;
    for p in planes {
        let u = p.to_unit();
        for y in 0..h {
            out[y * total_w + left..][..p.width()]
                .copy_from_slice(&u.values()[y * p.width()..][..p.width()]);
        }
        left += p.width() + GUTTER;
    }
    ImagePlane::new(h, total_w, out, RangeTag::Unit)
}
