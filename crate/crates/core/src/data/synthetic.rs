//! Procedural stand-ins for stained tissue tiles: a Voronoi class map where each class
//! carries its own texture and stain color. Texture scales sit near the resolving limit of
//! the default ×8 degradation, so part of each texture survives in the low-resolution input.
//!
//! * class 0 ("stroma"): oriented fibre-like stripes
//! * class 1 ("epithelium"): packed round nuclei
//! * class 2 ("other"): smooth low-frequency shading with sparse specks

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Dataset, Sample};
use super::degrade::{degrade, DegradationParams};
use super::sampling::child_seed;
use crate::error::Result;
use crate::image::{default_classes, ClassMaskStack, ColorImage, ImagePlane, RangeTag};

/// Per-channel stain absorption for each class.
const ABSORPTION: [[f32; 3]; 3] = [[0.25, 0.75, 0.45], [0.7, 0.85, 0.35], [0.35, 0.4, 0.3]];

struct Region {
    cy: f64,
    cx: f64,
    class: usize,
    angle: f64,
    period: f64,
    phase: f64,
}

fn class_map(size: usize, rng: &mut impl Rng) -> (Vec<u8>, Vec<Region>) {
    let n = rng.random_range(5..=9);
    let regions: Vec<Region> = (0..n)
        .map(|i| Region {
            cy: rng.random_range(0.0..size as f64),
            cx: rng.random_range(0.0..size as f64),
            // every class appears in every tile
            class: if i < 3 { i } else { rng.random_range(0..3) },
            angle: rng.random_range(0.0..std::f64::consts::PI),
            period: rng.random_range(14.0..26.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    let mut owner = vec![0u8; size * size];
    for y in 0..size {
        for x in 0..size {
            let (mut best, mut bd) = (0, f64::MAX);
            for (i, r) in regions.iter().enumerate() {
                let d = (y as f64 - r.cy).powi(2) + (x as f64 - r.cx).powi(2);
                if d < bd {
                    bd = d;
                    best = i;
                }
            }
            owner[y * size + x] = best as u8;
        }
    }
    (owner, regions)
}

/// Stain density in `[0, 1]` for every pixel.
fn stain(size: usize, owner: &[u8], regions: &[Region], rng: &mut impl Rng) -> Vec<f32> {
    // nuclei on a jittered grid
    let spacing = 16usize;
    let cells = size.div_ceil(spacing) + 1;
    let nuclei: Vec<(f64, f64, f64)> = (0..cells * cells)
        .map(|i| {
            let (gy, gx) = ((i / cells * spacing) as f64, (i % cells * spacing) as f64);
            (
                gy + rng.random_range(-3.0..3.0),
                gx + rng.random_range(-3.0..3.0),
                rng.random_range(4.0..6.5),
            )
        })
        .collect();
    let specks: Vec<(usize, usize)> = (0..size * size / 150)
        .map(|_| (rng.random_range(0..size), rng.random_range(0..size)))
        .collect();
    let lf: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(30.0..60.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();

    let mut out = vec![0.0f32; size * size];
    for y in 0..size {
        for x in 0..size {
            let r = &regions[owner[y * size + x] as usize];
            let (yf, xf) = (y as f64, x as f64);
            let v = match r.class {
                0 => {
                    let t = (xf * r.angle.cos() + yf * r.angle.sin()) / r.period;
                    0.25 + 0.6 * (0.5 + 0.5 * (std::f64::consts::TAU * t + r.phase).sin())
                }
                1 => {
                    // a nucleus reaches at most one grid cell beyond its own
                    let (gy, gx) = (y / spacing, x / spacing);
                    let mut inside = 0.2;
                    for cy in gy.saturating_sub(1)..(gy + 2).min(cells) {
                        for cx in gx.saturating_sub(1)..(gx + 2).min(cells) {
                            let (ny, nx, rad) = nuclei[cy * cells + cx];
                            if (yf - ny).powi(2) + (xf - nx).powi(2) < rad * rad {
                                inside = 0.95;
                            }
                        }
                    }
                    inside
                }
                _ => {
                    let s: f64 = lf
                        .iter()
                        .map(|(a, p, ph)| {
                            (std::f64::consts::TAU * (xf * a.cos() + yf * a.sin()) / p + ph).sin()
                        })
                        .sum();
                    0.35 + 0.12 * s / 3.0
                }
            };
            out[y * size + x] = v.clamp(0.0, 1.0) as f32;
        }
    }
    for (y, x) in specks {
        if regions[owner[y * size + x] as usize].class == 2 {
            out[y * size + x] = 0.9;
        }
    }
    out
}

/// One synthetic color tile with its class masks.
pub fn synthetic_sample(size: usize, seed: u64) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (owner, regions) = class_map(size, &mut rng);
    let density = stain(size, &owner, &regions, &mut rng);
    let class_of: Vec<u8> = owner
        .iter()
        .map(|&o| regions[o as usize].class as u8)
        .collect();
    let channel = |c: usize| {
        let v = density
            .iter()
            .zip(&class_of)
            .map(|(&d, &k)| 1.0 - d * ABSORPTION[k as usize][c])
            .collect();
        ImagePlane::clamped(size, size, v, RangeTag::Unit)
    };
    let color = ColorImage::new(channel(0)?, channel(1)?, channel(2)?)?;
    let masks = ClassMaskStack::from_indices(default_classes(), size, size, &class_of)?;
    Ok(Sample { color, masks })
}

pub fn synthetic_dataset(count: usize, size: usize, seed: u64) -> Result<Dataset> {
    let samples = (0..count)
        .map(|i| synthetic_sample(size, child_seed(seed, i as u64, 7)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(default_classes(), samples)
}

/// A diffraction-limited single-band "absorbance" image (arbitrary units, not unit range)
/// with its class masks, built by degrading a synthetic tile.
pub fn synthetic_band(size: usize, seed: u64) -> Result<(usize, usize, Vec<f32>, ClassMaskStack)> {
    let s = synthetic_sample(size, seed)?;
    let gray = super::augment::invert(&s.color.channels[1]);
    let deg = DegradationParams {
        down_factor: if size % 8 == 0 { 8 } else { 1 },
        ..DegradationParams::default()
    };
    let lr = degrade(&gray, &deg)?;
    let absorbance = lr.values().iter().map(|v| 0.05 + 1.2 * v).collect();
    Ok((size, size, absorbance, s.masks))
}
