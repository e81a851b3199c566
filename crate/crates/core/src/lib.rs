//! Class-conditioned GAN super-resolution for single-band, diffraction-limited images.
//!
//! The crate covers the whole workflow: simulating paired low/high resolution training
//! data from color images and class masks, the U-Net/Res-Net generator with either plain
//! or class-conditional normalization, the discriminator, pixel/perceptual/adversarial
//! losses, the two-phase training schedule with checkpointing, and tiled inference.

pub mod cond_norm;
pub mod container;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod image;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use generator::{GanMode, Generator, GeneratorConfig};
pub use image::{ClassMaskStack, ColorImage, ImagePlane, RangeTag};
pub use tensor::{Scalar, Tensor};
