//! Applying a trained generator to whole single-band images: percentile normalization,
//! overlapping tiles with feathered blending, and the `infer` file pipeline.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::container::file_sha256;
use crate::data::degrade::reflect_index;
use crate::data::io::{load_band, save_gray16};
use crate::data::MaskSource;
use crate::error::{dim_err, Error, Result};
use crate::generator::{GanMode, Generator};
use crate::image::{ClassMaskStack, ImagePlane, RangeTag};
use crate::trainer::load_generator;

/// Reference figure for a GPU implementation, reported next to the measured time.
pub const REFERENCE_SECONDS_PER_MEGAPIXEL: f64 = 1.0;

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f32], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input(
            "cannot take a percentile of an empty plane".into(),
        ));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::Config(format!(
            "percentile must lie in (0, 100], got {p}"
        )));
    }
    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let rank = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = rank - lo as f64;
    Ok(sorted[lo] + t * (sorted[hi] - sorted[lo]))
}

/// Divides by the `p`-th percentile and clamps into `[0, 1]`.
pub fn normalize_band(height: usize, width: usize, values: &[f32], p: f64) -> Result<ImagePlane> {
    if values.len() != height * width {
        return Err(dim_err!(
            "{} values for a {height}x{width} band",
            values.len()
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("band contains non-finite values".into()));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("band is all zero".into()));
    }
    let d = percentile(values, p)?;
    if d <= 0.0 {
        return Err(Error::Degenerate(format!(
            "{p}th percentile is {d}; cannot normalize"
        )));
    }
    let scaled = values.iter().map(|&v| (v as f64 / d) as f32).collect();
    ImagePlane::clamped(height, width, scaled, RangeTag::Unit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileConfig {
    pub tile: usize,
    pub overlap: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            tile: 256,
            overlap: 32,
        }
    }
}

/// Tile grid along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisLayout {
    pub extent: usize,
    /// Tile length actually used (shrinks for small images).
    pub tile: usize,
    pub count: usize,
    pub stride: usize,
    /// Extent after reflect padding at the far end.
    pub padded: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLayout {
    pub rows: AxisLayout,
    pub cols: AxisLayout,
    pub overlap: usize,
}

impl TileLayout {
    pub fn tiles(&self) -> usize {
        self.rows.count * self.cols.count
    }
}

fn axis_layout(extent: usize, tile: usize, overlap: usize, multiple: usize) -> AxisLayout {
    let tile = tile.min(extent.div_ceil(multiple) * multiple);
    let stride = tile - overlap;
    let count = if extent <= tile {
        1
    } else {
        (extent - overlap).div_ceil(stride)
    };
    AxisLayout {
        extent,
        tile,
        count,
        stride,
        padded: (count - 1) * stride + tile,
    }
}

impl TileConfig {
    pub fn validate(&self, multiple: usize) -> Result<()> {
        let m = multiple.max(8);
        if self.tile == 0 || self.tile % m != 0 {
            return Err(Error::Config(format!(
                "tile size {} must be a positive multiple of {m}",
                self.tile
            )));
        }
        if 2 * self.overlap >= self.tile {
            return Err(Error::Config(format!(
                "overlap {} must be less than half the tile size {}",
                self.overlap, self.tile
            )));
        }
        Ok(())
    }

    pub fn layout(&self, height: usize, width: usize, multiple: usize) -> TileLayout {
        let m = multiple.max(8);
        let overlap = self.overlap;
        TileLayout {
            rows: axis_layout(height, self.tile, overlap, m),
            cols: axis_layout(width, self.tile, overlap, m),
            overlap,
        }
    }
}

/// Blend weight along one axis: ramps only on sides shared with a neighbouring tile, so
/// the weights of overlapping tiles sum to one.
fn feather(tile: usize, overlap: usize, has_prev: bool, has_next: bool) -> Vec<f64> {
    (0..tile)
        .map(|i| {
            let mut w = 1.0f64;
            if has_prev && i < overlap {
                w = w.min((i as f64 + 0.5) / overlap as f64);
            }
            if has_next && i >= tile - overlap {
                w = w.min(((tile - i) as f64 - 0.5) / overlap as f64);
            }
            w
        })
        .collect()
}

fn reflect_crop<T: Copy>(
    src: &[T],
    h: usize,
    w: usize,
    top: usize,
    left: usize,
    th: usize,
    tw: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(th * tw);
    for y in top..top + th {
        let sy = reflect_index(y as isize, h);
        for x in left..left + tw {
            out.push(src[sy * w + reflect_index(x as isize, w)]);
        }
    }
    out
}

/// Runs the generator over overlapping tiles and blends them into an image of the input size.
/// Returns a signed-range plane.
pub fn tile_and_stitch(
    gen: &Generator<f32>,
    img: &ImagePlane,
    masks: Option<&ClassMaskStack>,
    cfg: &TileConfig,
) -> Result<(ImagePlane, TileLayout)> {
    let multiple = gen.config().size_multiple();
    cfg.validate(multiple)?;
    let conditional = gen.mode() == GanMode::Conditional;
    if let Some(m) = masks {
        m.check_aligned(img)?;
        if conditional && m.classes() != gen.config().classes.as_slice() {
            return Err(Error::Config(format!(
                "mask classes {:?} differ from the model's {:?}",
                m.classes(),
                gen.config().classes
            )));
        }
    } else if conditional {
        return Err(Error::Input(
            "class masks are required in conditional mode".into(),
        ));
    }
    let (h, w) = img.dims();
    let layout = cfg.layout(h, w, multiple);
    let (ra, ca) = (layout.rows, layout.cols);
    let signed = img.to_signed();
    let mut acc = vec![0.0f64; ra.padded * ca.padded];
    let mut weight = vec![0.0f64; ra.padded * ca.padded];
    for r in 0..ra.count {
        let wy = feather(ra.tile, cfg.overlap, r > 0, r + 1 < ra.count);
        for c in 0..ca.count {
            let wx = feather(ca.tile, cfg.overlap, c > 0, c + 1 < ca.count);
            let (top, left) = (r * ra.stride, c * ca.stride);
            let tile = ImagePlane::new(
                ra.tile,
                ca.tile,
                reflect_crop(signed.values(), h, w, top, left, ra.tile, ca.tile),
                RangeTag::Signed,
            )?;
            let tile_masks = match masks.filter(|_| conditional) {
                Some(m) => {
                    let planes = (0..m.num_classes())
                        .map(|k| reflect_crop(m.plane(k), h, w, top, left, ra.tile, ca.tile))
                        .collect();
                    Some(ClassMaskStack::new(
                        m.classes().to_vec(),
                        ra.tile,
                        ca.tile,
                        planes,
                    )?)
                }
                None => None,
            };
            let y = gen.generate(&tile, tile_masks.as_ref())?;
            for ty in 0..ra.tile {
                let row = (top + ty) * ca.padded + left;
                for tx in 0..ca.tile {
                    let k = wy[ty] * wx[tx];
                    acc[row + tx] += k * y.values()[ty * ca.tile + tx] as f64;
                    weight[row + tx] += k;
                }
            }
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let i = y * ca.padded + x;
            out.push((acc[i] / weight[i]) as f32);
        }
    }
    Ok((ImagePlane::clamped(h, w, out, RangeTag::Signed)?, layout))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    pub band: PathBuf,
    pub masks: Option<MaskSource>,
    /// Class order of the mask rasters; defaults to the checkpoint's.
    pub mask_classes: Option<Vec<String>>,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
    pub percentile: f64,
    pub tiles: TileConfig,
}

impl InferOptions {
    pub fn new(
        band: impl Into<PathBuf>,
        checkpoint: impl Into<PathBuf>,
        out: impl Into<PathBuf>,
    ) -> Self {
        InferOptions {
            band: band.into(),
            masks: None,
            mask_classes: None,
            checkpoint: checkpoint.into(),
            out: out.into(),
            percentile: 90.0,
            tiles: TileConfig::default(),
        }
    }
}

/// Contents of the metrics sidecar written next to the output image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferReport {
    pub input: PathBuf,
    pub output: PathBuf,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub mode: GanMode,
    pub height: usize,
    pub width: usize,
    pub megapixels: f64,
    /// Wall-clock time from loading the band to writing the output.
    pub seconds: f64,
    pub seconds_per_megapixel: f64,
    pub reference_seconds_per_megapixel: f64,
    pub tile_layout: TileLayout,
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

/// load → normalize → tile and generate → unit range → 16-bit PNG plus a JSON sidecar.
pub fn infer(opts: &InferOptions) -> Result<InferReport> {
    let (gen, _) = load_generator(&opts.checkpoint)?;
    let classes = gen.config().classes.clone();
    if gen.mode() == GanMode::Conditional && opts.masks.is_none() {
        return Err(Error::Input(
            "the checkpoint holds a conditional model; class masks are required".into(),
        ));
    }
    if let Some(mc) = &opts.mask_classes {
        if gen.mode() == GanMode::Conditional && *mc != classes {
            return Err(Error::Config(format!(
                "mask classes {mc:?} differ from the checkpoint's {classes:?}"
            )));
        }
    }
    let start = Instant::now();
    let (h, w, raw) = load_band(&opts.band)?;
    let masks = match (&opts.masks, gen.mode()) {
        (Some(src), GanMode::Conditional) => {
            let names = opts.mask_classes.clone().unwrap_or_else(|| classes.clone());
            Some(src.load(&names)?)
        }
        _ => None,
    };
    let unit = normalize_band(h, w, &raw, opts.percentile)?;
    let (sr, layout) = tile_and_stitch(&gen, &unit, masks.as_ref(), &opts.tiles)?;
    save_gray16(&opts.out, &sr.to_unit())?;
    let seconds = start.elapsed().as_secs_f64();
    let megapixels = (h * w) as f64 / 1e6;
    let report = InferReport {
        input: opts.band.clone(),
        output: opts.out.clone(),
        checkpoint: opts.checkpoint.clone(),
        checkpoint_sha256: file_sha256(&opts.checkpoint)?,
        mode: gen.mode(),
        height: h,
        width: w,
        megapixels,
        seconds,
        seconds_per_megapixel: seconds / megapixels,
        reference_seconds_per_megapixel: REFERENCE_SECONDS_PER_MEGAPIXEL,
        tile_layout: layout,
    };
    let side = sidecar_path(&opts.out);
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    log::info!(
        "{}x{} ({megapixels:.2} MPx) in {seconds:.2} s; reference {REFERENCE_SECONDS_PER_MEGAPIXEL} s/MPx",
        h,
        w
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f32> = (1..=10).map(|i| i as f32).collect();
        assert!((percentile(&v, 90.0).unwrap() - 9.1).abs() < 1e-12);
        assert_eq!(percentile(&v, 100.0).unwrap(), 10.0);
        assert!(percentile(&v, 0.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let p = normalize_band(2, 2, &[3.0; 4], 90.0).unwrap();
        assert!(p.values().iter().all(|&v| v == 1.0));
        assert!(matches!(
            normalize_band(1, 2, &[0.0, 0.0], 90.0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            normalize_band(1, 3, &[-1.0, -1.0, 1.0], 50.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn feather_weights_partition_unity() {
        let (tile, overlap) = (16, 4);
        let a = feather(tile, overlap, false, true);
        let b = feather(tile, overlap, true, false);
        for j in 0..overlap {
            assert!((a[tile - overlap + j] + b[j] - 1.0).abs() < 1e-12);
        }
        assert!(feather(tile, overlap, false, false)
            .iter()
            .all(|&w| w == 1.0));
    }

    #[test]
    fn layout_covers_the_image() {
        let cfg = TileConfig {
            tile: 96,
            overlap: 16,
        };
        let l = cfg.layout(256, 200, 8);
        for a in [l.rows, l.cols] {
            assert!(a.padded >= a.extent);
            assert!((a.count - 1) * a.stride < a.extent);
        }
        let small = cfg.layout(40, 40, 8);
        assert_eq!((small.rows.tile, small.rows.count), (40, 1));
    }
}
