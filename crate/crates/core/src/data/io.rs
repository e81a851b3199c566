//! Raster IO for HR sources, mask stacks and outputs.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ClassMaskStack, ColorImage, ImagePlane, RangeTag};

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::Input(format!("file not found: {}", path.display())));
    }
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a lossless raster as a unit-range color image; grayscale is replicated.
pub fn load_color(path: &Path) -> Result<ColorImage> {
    let img = open(path)?.to_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut planes: [Vec<f32>; 3] = Default::default();
    for px in img.pixels() {
        for (c, plane) in planes.iter_mut().enumerate() {
            plane.push(px.0[c]);
        }
    }
    let [r, g, b] = planes.map(|p| ImagePlane::clamped(h, w, p, RangeTag::Unit));
    ColorImage::new(r?, g?, b?)
}

/// Loads a single-band raster without range assumptions: 8/16-bit data is scaled to
/// `[0, 1]`, floating-point data is passed through.
pub fn load_band(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let img = open(path)?;
    let gray = img.to_luma32f();
    Ok((
        gray.height() as usize,
        gray.width() as usize,
        gray.into_raw(),
    ))
}

/// Where the class masks of an image come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSource {
    /// One raster whose pixel value is the class index.
    Indexed(PathBuf),
    /// One single-channel raster per class; non-zero marks membership.
    Planes(Vec<PathBuf>),
}

impl MaskSource {
    pub fn load(&self, classes: &[String]) -> Result<ClassMaskStack> {
        match self {
            MaskSource::Indexed(p) => load_index_mask(p, classes),
            MaskSource::Planes(ps) => load_mask_planes(ps, classes),
        }
    }

    pub fn resolve(&self, root: &Path) -> MaskSource {
        match self {
            MaskSource::Indexed(p) => MaskSource::Indexed(root.join(p)),
            MaskSource::Planes(ps) => MaskSource::Planes(ps.iter().map(|p| root.join(p)).collect()),
        }
    }

    pub fn paths(&self) -> Vec<&Path> {
        match self {
            MaskSource::Indexed(p) => vec![p.as_path()],
            MaskSource::Planes(ps) => ps.iter().map(PathBuf::as_path).collect(),
        }
    }
}

pub fn load_index_mask(path: &Path, classes: &[String]) -> Result<ClassMaskStack> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let indices: Vec<u8> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw(),
        DynamicImage::ImageLuma16(b) => b
            .into_raw()
            .into_iter()
            .map(|v| u8::try_from(v).unwrap_or(u8::MAX))
            .collect(),
        _ => {
            return Err(Error::Input(format!(
                "{}: indexed masks must be single-channel 8- or 16-bit rasters",
                path.display()
            )))
        }
    };
    ClassMaskStack::from_indices(classes.to_vec(), h, w, &indices)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn load_mask_planes(paths: &[PathBuf], classes: &[String]) -> Result<ClassMaskStack> {
    if paths.len() != classes.len() {
        return Err(Error::Config(format!(
            "{} mask rasters supplied for {} classes",
            paths.len(),
            classes.len()
        )));
    }
    let mut dims = None;
    let mut planes = Vec::with_capacity(paths.len());
    for p in paths {
        let img = open(p)?.to_luma8();
        let d = (img.height() as usize, img.width() as usize);
        if dims.is_some_and(|prev| prev != d) {
            return Err(Error::Dimension(format!(
                "{}: mask planes differ in size",
                p.display()
            )));
        }
        dims = Some(d);
        planes.push(
            img.into_raw()
                .into_iter()
                .map(|v| u8::from(v != 0))
                .collect(),
        );
    }
    let (h, w) = dims.expect("at least one class");
    ClassMaskStack::new(classes.to_vec(), h, w, planes)
}

fn save(path: &Path, img: DynamicImage) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes a plane as a 16-bit grayscale raster (unit range; signed planes are converted).
pub fn save_gray16(path: &Path, plane: &ImagePlane) -> Result<()> {
    let unit = plane.to_unit();
    let raw: Vec<u16> = unit.values().iter().map(|&v| quantize16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(unit.width() as u32, unit.height() as u32, raw).expect("extents");
    save(path, DynamicImage::ImageLuma16(buf))
}

pub fn save_index_mask(path: &Path, masks: &ClassMaskStack) -> Result<()> {
    let buf = GrayImage::from_raw(
        masks.width() as u32,
        masks.height() as u32,
        masks.to_indices(),
    )
    .expect("extents");
    save(path, DynamicImage::ImageLuma8(buf))
}

pub fn save_color8(path: &Path, img: &ColorImage) -> Result<()> {
    let (h, w) = img.dims();
    let mut buf = RgbImage::new(w as u32, h as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        *px = Rgb(img
            .channels
            .clone()
            .map(|c| (c.values()[i].clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    save(path, DynamicImage::ImageRgb8(buf))
}
