//! Training-data pipeline: ingestion, HR→LR simulation, augmentation and batching.

pub mod augment;
pub mod dataset;
pub mod degrade;
pub mod io;
pub mod sampling;
pub mod synthetic;

pub use augment::{simulate_lr, simulate_pair, AugmentationParams};
pub use dataset::{
    materialize, Dataset, Manifest, ManifestEntry, PairSampler, PairedBatch, Sample, TrainingPair,
};
pub use degrade::{gaussian_blur, resample, DegradationParams, Direction, ResampleMode};
pub use io::MaskSource;
pub use sampling::{sample_patch, BatchPlan, EpochIterator, EpochState};
