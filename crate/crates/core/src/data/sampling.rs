//! Patch windows and the shuffled epoch stream.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::image::{ClassMaskStack, ImagePlane};

/// Top-left corner of a `size×size` window drawn uniformly from all valid positions.
pub fn sample_window(
    height: usize,
    width: usize,
    size: usize,
    rng: &mut impl Rng,
) -> Result<(usize, usize)> {
    if size == 0 || height < size || width < size {
        return Err(dim_err!(
            "cannot take a {size}x{size} patch from a {height}x{width} image"
        ));
    }
    let top = rng.random_range(0..=height - size);
    let left = rng.random_range(0..=width - size);
    Ok((top, left))
}

/// Crops the same random window from an image and its mask stack.
pub fn sample_patch(
    img: &ImagePlane,
    masks: &ClassMaskStack,
    size: usize,
    rng: &mut impl Rng,
) -> Result<(ImagePlane, ClassMaskStack)> {
    masks.check_aligned(img)?;
    let (top, left) = sample_window(img.height(), img.width(), size, rng)?;
    Ok((
        img.crop(top, left, size, size)?,
        masks.crop(top, left, size, size)?,
    ))
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child_seed(parent: u64, a: u64, b: u64) -> u64 {
    mix_seed(mix_seed(parent ^ mix_seed(a)) ^ b)
}

/// One batch of dataset indices together with the seed that drives its augmentation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub epoch: u64,
    pub index: usize,
    pub items: Vec<usize>,
    pub seed: u64,
}

/// Resumable position in the epoch stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochState {
    pub seed: u64,
    pub epoch: u64,
    /// Next batch index within the epoch.
    pub cursor: usize,
}

/// Endless stream of shuffled batches.
///
/// Each epoch is a fresh permutation of the dataset derived from `(seed, epoch)`; the
/// final short batch of an epoch is dropped. Batch seeds depend only on
/// `(seed, epoch, batch)`, so any batch can be regenerated independently of the others.
#[derive(Clone, Debug)]
pub struct EpochIterator {
    len: usize,
    batch_size: usize,
    state: EpochState,
    order: Vec<usize>,
}

impl EpochIterator {
    pub fn new(len: usize, batch_size: usize, rng: &mut impl Rng) -> Result<Self> {
        let seed = rng.random();
        Self::resume(
            len,
            batch_size,
            EpochState {
                seed,
                epoch: 0,
                cursor: 0,
            },
        )
    }

    pub fn resume(len: usize, batch_size: usize, state: EpochState) -> Result<Self> {
        if len == 0 {
            return Err(Error::Config("dataset is empty".into()));
        }
        if batch_size == 0 || batch_size > len {
            return Err(Error::Config(format!(
                "batch size {batch_size} must lie in 1..={len} (dataset size)"
            )));
        }
        let order = Self::permutation(len, state.seed, state.epoch);
        Ok(EpochIterator {
            len,
            batch_size,
            state,
            order,
        })
    }

    fn permutation(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(child_seed(
            seed,
            epoch,
            u64::MAX,
        )));
        order
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len / self.batch_size
    }

    pub fn state(&self) -> EpochState {
        self.state
    }

    /// The permutation of the current epoch.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for EpochIterator {
    type Item = BatchPlan;

    fn next(&mut self) -> Option<BatchPlan> {
        if self.state.cursor >= self.batches_per_epoch() {
            self.state.epoch += 1;
            self.state.cursor = 0;
            self.order = Self::permutation(self.len, self.state.seed, self.state.epoch);
        }
        let i = self.state.cursor;
        let items = self.order[i * self.batch_size..(i + 1) * self.batch_size].to_vec();
        let plan = BatchPlan {
            epoch: self.state.epoch,
            index: i,
            items,
            seed: child_seed(self.state.seed, self.state.epoch, i as u64),
        };
        self.state.cursor += 1;
        Some(plan)
    }
}
