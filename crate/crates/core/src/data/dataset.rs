//! Manifest-driven datasets and assembly of paired training batches.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{rotate_sample, simulate_pair, AugmentationParams};
use super::degrade::DegradationParams;
use super::io::{load_color, save_gray16, save_index_mask, MaskSource};
use super::sampling::{child_seed, sample_window, BatchPlan};
use crate::error::{Error, Result};
use crate::image::{stack_batch, ClassMaskStack, ColorImage, ImagePlane};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub masks: MaskSource,
}

/// Structured-text (TOML) list of image/mask pairs plus the class ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub classes: Vec<String>,
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.classes.is_empty() {
            return Err(Error::Config(format!(
                "{}: manifest lists no classes",
                path.display()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub color: ColorImage,
    pub masks: ClassMaskStack,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
}

/// Entries that failed to load, with the reason for each.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub failures: Vec<(usize, String)>,
}

impl Dataset {
    pub fn new(classes: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        for s in &samples {
            if s.masks.classes() != classes.as_slice() {
                return Err(Error::Config(
                    "sample class ordering differs from the dataset's".into(),
                ));
            }
            if s.masks.dims() != s.color.dims() {
                return Err(Error::Dimension(
                    "sample masks are not aligned with the image".into(),
                ));
            }
        }
        Ok(Dataset { classes, samples })
    }

    /// Loads every manifest entry, resolving relative paths against `root`.
    /// Any failing entry is reported and the load fails as a whole.
    pub fn load(manifest: &Manifest, root: &Path) -> Result<Self> {
        let (samples, report) = Self::load_lenient(manifest, root);
        if !report.failures.is_empty() {
            let lines: Vec<String> = report
                .failures
                .iter()
                .map(|(i, msg)| format!("entry {i}: {msg}"))
                .collect();
            return Err(Error::Input(lines.join("; ")));
        }
        Self::new(manifest.classes.clone(), samples)
    }

    pub fn load_lenient(manifest: &Manifest, root: &Path) -> (Vec<Sample>, LoadReport) {
        let mut samples = Vec::new();
        let mut report = LoadReport::default();
        for (i, e) in manifest.entries.iter().enumerate() {
            let loaded = load_color(&root.join(&e.image)).and_then(|color| {
                let masks = e.masks.resolve(root).load(&manifest.classes)?;
                if masks.dims() != color.dims() {
                    return Err(Error::Dimension(format!(
                        "masks {:?} do not match image {:?}",
                        masks.dims(),
                        color.dims()
                    )));
                }
                Ok(Sample { color, masks })
            });
            match loaded {
                Ok(s) => samples.push(s),
                Err(err) => report.failures.push((i, err.to_string())),
            }
        }
        (samples, report)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits off the last `n_val` samples as a validation set.
    pub fn split(mut self, n_val: usize) -> Result<(Dataset, Dataset)> {
        if n_val >= self.samples.len() {
            return Err(Error::Config(format!(
                "validation split of {n_val} leaves no training data out of {}",
                self.samples.len()
            )));
        }
        let val = self.samples.split_off(self.samples.len() - n_val);
        let classes = self.classes.clone();
        Ok((
            self,
            Dataset {
                classes,
                samples: val,
            },
        ))
    }
}

/// A simulated (LR, HR, masks) triple in unit range.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub lr: ImagePlane,
    pub hr: ImagePlane,
    pub masks: ClassMaskStack,
}

/// A batch at the network boundary: images in signed range, masks as 0/1 channels.
#[derive(Clone, Debug)]
pub struct PairedBatch<S> {
    pub lr: Tensor<S>,
    pub hr: Tensor<S>,
    pub masks: Tensor<S>,
}

impl<S: Scalar> PairedBatch<S> {
    pub fn from_pairs(pairs: &[TrainingPair]) -> Result<Self> {
        let lr: Vec<_> = pairs.iter().map(|p| p.lr.to_signed().to_tensor()).collect();
        let hr: Vec<_> = pairs.iter().map(|p| p.hr.to_signed().to_tensor()).collect();
        let masks: Vec<_> = pairs.iter().map(|p| p.masks.to_tensor()).collect();
        Ok(PairedBatch {
            lr: stack_batch(&lr)?,
            hr: stack_batch(&hr)?,
            masks: stack_batch(&masks)?,
        })
    }

    pub fn len(&self) -> usize {
        self.lr.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Turns source samples into augmented training pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSampler {
    pub degradation: DegradationParams,
    pub augmentation: AugmentationParams,
    pub patch_size: usize,
}

impl PairSampler {
    pub fn validate(&self) -> Result<()> {
        self.degradation.validate()?;
        self.augmentation.validate()?;
        if self.patch_size == 0 || self.patch_size % self.degradation.down_factor != 0 {
            return Err(Error::Config(format!(
                "patch size {} must be a positive multiple of the down-sampling factor {}",
                self.patch_size, self.degradation.down_factor
            )));
        }
        Ok(())
    }

    /// Draw order: rotation angle, patch window, channel, exponent.
    pub fn sample(&self, s: &Sample, seed: u64) -> Result<TrainingPair> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle = self.augmentation.draw_angle(&mut rng);
        let (h, w) = s.color.dims();
        let (top, left) = sample_window(h, w, self.patch_size, &mut rng)?;
        let channel = rng.random_range(0..3);
        let exponent = self.augmentation.draw_exponent(&mut rng);

        let (color, masks) = rotate_sample(&s.color, &s.masks, angle);
        let p = self.patch_size;
        let [r, g, b] = &color.channels;
        let patch = ColorImage::new(
            r.crop(top, left, p, p)?,
            g.crop(top, left, p, p)?,
            b.crop(top, left, p, p)?,
        )?;
        let masks = masks.crop(top, left, p, p)?;
        let (lr, hr) = simulate_pair(&patch, &self.degradation, channel, exponent)?;
        Ok(TrainingPair { lr, hr, masks })
    }

    pub fn batch<S: Scalar>(&self, data: &Dataset, plan: &BatchPlan) -> Result<PairedBatch<S>> {
        let pairs = plan
            .items
            .iter()
            .enumerate()
            .map(|(slot, &i)| {
                self.sample(
                    &data.samples[i],
                    child_seed(plan.seed, slot as u64, i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        PairedBatch::from_pairs(&pairs)
    }

    /// One fixed pair per sample; identical for identical `seed`.
    pub fn fixed_pairs(&self, data: &Dataset, seed: u64) -> Result<Vec<TrainingPair>> {
        data.samples
            .iter()
            .enumerate()
            .map(|(i, s)| self.sample(s, child_seed(seed, i as u64, 0)))
            .collect()
    }
}

/// Outcome of writing a paired dataset to disk.
#[derive(Debug, Default)]
pub struct MaterializeReport {
    pub written: usize,
    pub failures: Vec<(usize, String)>,
}

/// Writes full-size simulated pairs as `lr/`, `hr/` and `masks/` rasters.
///
/// Each entry uses its own seed derived from `seed`, so the output is byte-identical
/// across runs. Entries that fail to load are reported and skipped.
pub fn materialize(
    manifest: &Manifest,
    root: &Path,
    out: &Path,
    deg: &DegradationParams,
    aug: &AugmentationParams,
    seed: u64,
) -> Result<MaterializeReport> {
    use rand::Rng;
    deg.validate()?;
    aug.validate()?;
    let mut report = MaterializeReport::default();
    for (i, entry) in manifest.entries.iter().enumerate() {
        let one = || -> Result<()> {
            let color = load_color(&root.join(&entry.image))?;
            let masks = entry.masks.resolve(root).load(&manifest.classes)?;
            if masks.dims() != color.dims() {
                return Err(Error::Dimension(
                    "masks are not aligned with the image".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, i as u64, 0));
            let angle = aug.draw_angle(&mut rng);
            let channel = rng.random_range(0..3);
            let exponent = aug.draw_exponent(&mut rng);
            let (color, masks) = rotate_sample(&color, &masks, angle);
            let (lr, hr) = simulate_pair(&color, deg, channel, exponent)?;
            let name = format!("{i:05}.png");
            save_gray16(&out.join("lr").join(&name), &lr)?;
            save_gray16(&out.join("hr").join(&name), &hr)?;
            save_index_mask(&out.join("masks").join(&name), &masks)?;
            Ok(())
        };
        match one() {
            Ok(()) => report.written += 1,
            Err(e) => report.failures.push((i, e.to_string())),
        }
    }
    Ok(report)
}
