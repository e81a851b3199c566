//! Single-band image planes and aligned class-mask stacks.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Value range an [`ImagePlane`] is declared to occupy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RangeTag {
    /// `[0, 1]`: storage and metric range.
    Unit,
    /// `[-1, 1]`: the generator's input/output range.
    Signed,
}

impl RangeTag {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            RangeTag::Unit => (0.0, 1.0),
            RangeTag::Signed => (-1.0, 1.0),
        }
    }
}

/// Row-major 2-D grid of intensities with a declared range.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    values: Vec<f32>,
    range: RangeTag,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, values: Vec<f32>, range: RangeTag) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(dim_err!(
                "image plane must be at least 1x1, got {height}x{width}"
            ));
        }
        if values.len() != height * width {
            return Err(dim_err!(
                "{height}x{width} plane needs {} values, got {}",
                height * width,
                values.len()
            ));
        }
        let (lo, hi) = range.bounds();
        if let Some(bad) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::Input(format!(
                "value {bad} outside declared range [{lo}, {hi}]"
            )));
        }
        Ok(ImagePlane {
            height,
            width,
            values,
            range,
        })
    }

    /// Builds a plane, clamping every value into the declared range.
    pub fn clamped(
        height: usize,
        width: usize,
        mut values: Vec<f32>,
        range: RangeTag,
    ) -> Result<Self> {
        let (lo, hi) = range.bounds();
        for v in &mut values {
            *v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        }
        Self::new(height, width, values, range)
    }

    pub fn constant(height: usize, width: usize, value: f32, range: RangeTag) -> Result<Self> {
        Self::new(height, width, vec![value; height * width], range)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn range(&self) -> RangeTag {
        self.range
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// `[0,1] → [-1,1]`; identity on planes already signed.
    pub fn to_signed(&self) -> ImagePlane {
        match self.range {
            RangeTag::Signed => self.clone(),
            RangeTag::Unit => ImagePlane {
                values: self
                    .values
                    .iter()
                    .map(|v| (v * 2.0 - 1.0).clamp(-1.0, 1.0))
                    .collect(),
                range: RangeTag::Signed,
                ..*self
            },
        }
    }

    /// `[-1,1] → [0,1]`; identity on planes already in unit range.
    pub fn to_unit(&self) -> ImagePlane {
        match self.range {
            RangeTag::Unit => self.clone(),
            RangeTag::Signed => ImagePlane {
                values: self
                    .values
                    .iter()
                    .map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
                    .collect(),
                range: RangeTag::Unit,
                ..*self
            },
        }
    }

    /// Window `[top, top+h) × [left, left+w)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<ImagePlane> {
        if top + h > self.height || left + w > self.width || h == 0 || w == 0 {
            return Err(dim_err!(
                "crop {h}x{w} at ({top},{left}) exceeds {}x{}",
                self.height,
                self.width
            ));
        }
        let values = (top..top + h)
            .flat_map(|y| {
                self.values[y * self.width + left..y * self.width + left + w]
                    .iter()
                    .copied()
            })
            .collect();
        Ok(ImagePlane {
            height: h,
            width: w,
            values,
            range: self.range,
        })
    }

    /// `[1, 1, H, W]` tensor.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::from_vec(
            [1, 1, self.height, self.width],
            self.values.iter().map(|&v| S::lit(v as f64)).collect(),
        )
        .expect("plane extents")
    }

    /// Reads plane `(n, 0)` of a tensor, clamping into `range`.
    pub fn from_tensor<S: Scalar>(t: &Tensor<S>, n: usize, range: RangeTag) -> Result<ImagePlane> {
        let values = t.plane(n, 0).iter().map(|v| v.as_f64() as f32).collect();
        Self::clamped(t.height(), t.width(), values, range)
    }
}

/// Three-channel color image in unit range, channel-planar.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    pub channels: [ImagePlane; 3],
}

impl ColorImage {
    pub fn new(r: ImagePlane, g: ImagePlane, b: ImagePlane) -> Result<Self> {
        if r.dims() != g.dims() || r.dims() != b.dims() {
            return Err(dim_err!("color channels have mismatched extents"));
        }
        Ok(ColorImage {
            channels: [r, g, b],
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }
}

/// One binary plane per class, in the order given by `classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMaskStack {
    classes: Vec<String>,
    height: usize,
    width: usize,
    /// `planes[k][y*width + x] ∈ {0, 1}`
    planes: Vec<Vec<u8>>,
}

impl ClassMaskStack {
    pub fn new(
        classes: Vec<String>,
        height: usize,
        width: usize,
        planes: Vec<Vec<u8>>,
    ) -> Result<Self> {
        if classes.is_empty() || classes.len() != planes.len() {
            return Err(Error::Input(format!(
                "{} class names for {} mask planes",
                classes.len(),
                planes.len()
            )));
        }
        if height == 0 || width == 0 {
            return Err(dim_err!("mask stack must be at least 1x1"));
        }
        for p in &planes {
            if p.len() != height * width {
                return Err(dim_err!(
                    "mask plane has {} values, expected {}",
                    p.len(),
                    height * width
                ));
            }
            if p.iter().any(|&v| v > 1) {
                return Err(Error::Input("mask values must be 0 or 1".into()));
            }
        }
        Ok(ClassMaskStack {
            classes,
            height,
            width,
            planes,
        })
    }

    /// One-hot stack from a per-pixel class index map.
    pub fn from_indices(
        classes: Vec<String>,
        height: usize,
        width: usize,
        indices: &[u8],
    ) -> Result<Self> {
        let k = classes.len();
        if indices.len() != height * width {
            return Err(dim_err!(
                "index map has {} values, expected {}",
                indices.len(),
                height * width
            ));
        }
        if let Some(bad) = indices.iter().find(|&&i| i as usize >= k) {
            return Err(Error::Input(format!(
                "class index {bad} out of range for {k} classes"
            )));
        }
        let planes = (0..k)
            .map(|c| indices.iter().map(|&i| u8::from(i as usize == c)).collect())
            .collect();
        Self::new(classes, height, width, planes)
    }

    /// Every pixel assigned to class `class`.
    pub fn uniform(
        classes: Vec<String>,
        height: usize,
        width: usize,
        class: usize,
    ) -> Result<Self> {
        Self::from_indices(classes, height, width, &vec![class as u8; height * width])
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn plane(&self, k: usize) -> &[u8] {
        &self.planes[k]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut [u8] {
        &mut self.planes[k]
    }

    /// Index of the first class set at each pixel (`num_classes` where none is set).
    pub fn to_indices(&self) -> Vec<u8> {
        (0..self.height * self.width)
            .map(|i| {
                (0..self.num_classes())
                    .find(|&k| self.planes[k][i] == 1)
                    .unwrap_or(self.num_classes()) as u8
            })
            .collect()
    }

    pub fn check_aligned(&self, plane: &ImagePlane) -> Result<()> {
        if self.dims() != plane.dims() {
            return Err(dim_err!(
                "mask stack {}x{} is not aligned with image {}x{}",
                self.height,
                self.width,
                plane.height(),
                plane.width()
            ));
        }
        Ok(())
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<ClassMaskStack> {
        if top + h > self.height || left + w > self.width || h == 0 || w == 0 {
            return Err(dim_err!("mask crop exceeds {}x{}", self.height, self.width));
        }
        let planes = self
            .planes
            .iter()
            .map(|p| {
                (top..top + h)
                    .flat_map(|y| {
                        p[y * self.width + left..y * self.width + left + w]
                            .iter()
                            .copied()
                    })
                    .collect()
            })
            .collect();
        Ok(ClassMaskStack {
            classes: self.classes.clone(),
            height: h,
            width: w,
            planes,
        })
    }

    /// `[1, K, H, W]` tensor of 0/1 values.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let data = self
            .planes
            .iter()
            .flat_map(|p| p.iter().map(|&v| if v == 1 { S::one() } else { S::zero() }))
            .collect();
        Tensor::from_vec([1, self.num_classes(), self.height, self.width], data)
            .expect("mask extents")
    }
}

pub fn default_classes() -> Vec<String> {
    ["stroma", "epithelium", "other"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Stacks single-item tensors along the batch axis.
pub fn stack_batch<S: Scalar>(items: &[Tensor<S>]) -> Result<Tensor<S>> {
    let first = items
        .first()
        .ok_or_else(|| dim_err!("cannot stack an empty batch"))?;
    let [_, c, h, w] = first.shape();
    let mut data = Vec::with_capacity(items.len() * first.len());
    for t in items {
        if t.shape()[1..] != [c, h, w] {
            return Err(dim_err!("batch items have mismatched shapes"));
        }
        data.extend_from_slice(t.data());
    }
    let n = data.len() / (c * h * w);
    Tensor::from_vec([n, c, h, w], data)
}
