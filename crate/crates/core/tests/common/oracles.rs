//! Brute-force references for the degradation stages, written without the library's helpers.

use rand::Rng;
use semsr::{ImagePlane, RangeTag};

pub fn random_plane(h: usize, w: usize, r: &mut impl Rng) -> ImagePlane {
    ImagePlane::new(
        h,
        w,
        (0..h * w).map(|_| r.random_range(0.0..=1.0f32)).collect(),
        RangeTag::Unit,
    )
    .unwrap()
}

pub fn max_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, y)| (x as f64 - y).abs())
        .fold(0.0, f64::max)
}

/// Mirror with the edge sample repeated, applied until the index lands inside.
pub fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    while i < 0 || i >= n {
        i = if i < 0 { -i - 1 } else { 2 * n - 1 - i };
    }
    i as usize
}

/// Full 2-D convolution with a 2-D Gaussian normalized over the whole window.
pub fn blur_oracle(img: &ImagePlane, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut taps = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            taps.push((
                dy,
                dx,
                (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp(),
            ));
        }
    }
    let total: f64 = taps.iter().map(|t| t.2).sum();
    let (h, w) = img.dims();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .map(|&(dy, dx, k)| {
                    k / total
                        * img.get(mirror(y as isize + dy, h), mirror(x as isize + dx, w)) as f64
                })
                .sum();
        }
    }
    out
}

/// Bilinear down-sampling as a tent-weighted sum at pixel-centre-aligned source coordinates.
pub fn bilinear_down_oracle(img: &ImagePlane, f: usize) -> Vec<f64> {
    let (h, w) = img.dims();
    let (oh, ow) = (h / f, w / f);
    let centre = |o: usize| (o as f64 + 0.5) * f as f64 - 0.5;
    let tent = |d: f64| (1.0 - d.abs()).max(0.0);
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let (sy, sx) = (centre(oy), centre(ox));
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    acc += tent(sy - y as f64) * tent(sx - x as f64) * img.get(y, x) as f64;
                }
            }
            out.push(acc);
        }
    }
    out
}

pub fn nearest_up_oracle(img: &ImagePlane, f: usize) -> Vec<f64> {
    let (h, w) = img.dims();
    (0..h * f * w * f)
        .map(|i| img.get(i / (w * f) / f, i % (w * f) / f) as f64)
        .collect()
}
