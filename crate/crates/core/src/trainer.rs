//! Two-phase training: pixel-MSE pretraining of the generator, then adversarial training
//! with a fixed generator:critic step ratio and learning-rate ratio.
//!
//! "Iterations" always count generator updates. In the adversarial phase every
//! `g_steps_per_d_step`-th generator update is followed by one critic update.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::Container;
use crate::data::dataset::{Dataset, Manifest, PairSampler, PairedBatch, TrainingPair};
use crate::data::sampling::{child_seed, EpochIterator, EpochState};
use crate::data::synthetic::synthetic_dataset;
use crate::data::{AugmentationParams, DegradationParams};
use crate::discriminator::{ConvSpec, Discriminator, DiscriminatorConfig};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::image::{ImagePlane, RangeTag};
use crate::losses::{
    adv_disc_with_grad, adv_gen_with_grad, mse_with_grad, perceptual_with_grad, total_loss,
    ExtractorConfig, FeatureExtractor, LossWeights,
};
use crate::metrics;
use crate::nn::Module;
use crate::optim::{Adam, AdamConfig};

pub const CHECKPOINT_KIND: &str = "semsr-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSchedule {
    pub phase1_iters: u64,
    pub phase2_iters: u64,
    pub g_steps_per_d_step: u64,
    pub lr_g: f64,
    /// The critic learning rate is always `lr_g * lr_d_ratio`.
    pub lr_d_ratio: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    /// Generator updates between validation passes (0 disables).
    pub validate_every: u64,
    /// Generator updates between checkpoints (0 disables).
    pub checkpoint_every: u64,
    /// Refuse adversarial training unless pretraining has completed.
    pub require_pretrained: bool,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            phase1_iters: 50_000,
            phase2_iters: 100_000,
            g_steps_per_d_step: 6,
            lr_g: 1e-4,
            lr_d_ratio: 0.1,
            batch_size: 12,
            patch_size: 96,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            validate_every: 500,
            checkpoint_every: 1000,
            require_pretrained: true,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.g_steps_per_d_step == 0 {
            return Err(Error::Config(
                "g_steps_per_d_step must be at least 1".into(),
            ));
        }
        if !(self.lr_g > 0.0
            && self.lr_g.is_finite()
            && self.lr_d_ratio > 0.0
            && self.lr_d_ratio.is_finite())
        {
            return Err(Error::Config(
                "learning rate and ratio must be positive and finite".into(),
            ));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::Config(
                "batch and patch size must be positive".into(),
            ));
        }
        self.weights.validate()?;
        self.adam.validate()
    }

    pub fn lr_d(&self) -> f64 {
        self.lr_g * self.lr_d_ratio
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Manifest path, resolved against the data root when relative.
    pub manifest: Option<PathBuf>,
    /// Procedural tiles, used when no manifest is given.
    pub synthetic: Option<SyntheticData>,
    /// Samples held out for validation (taken from the end of the list).
    pub val_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: None,
            synthetic: Some(SyntheticData {
                count: 64,
                size: 128,
                seed: 7,
            }),
            val_count: 8,
        }
    }
}

impl DataConfig {
    /// Loads and splits the dataset into training and validation parts.
    pub fn load(&self, root: &Path) -> Result<(Dataset, Dataset)> {
        let data = match (&self.manifest, &self.synthetic) {
            (Some(m), _) => {
                let path = root.join(m);
                let manifest = Manifest::load(&path)?;
                let base = path.parent().unwrap_or(root);
                Dataset::load(&manifest, base)?
            }
            (None, Some(s)) => synthetic_dataset(s.count, s.size, s.seed)?,
            (None, None) => {
                return Err(Error::Config(
                    "no manifest or synthetic data configured".into(),
                ))
            }
        };
        data.split(self.val_count)
    }
}

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub schedule: TrainingSchedule,
    pub degradation: DegradationParams,
    pub augmentation: AugmentationParams,
    pub extractor: ExtractorConfig,
    pub data: DataConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            schedule: TrainingSchedule::default(),
            degradation: DegradationParams::default(),
            augmentation: AugmentationParams::default(),
            extractor: ExtractorConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl TrainConfig {
    /// A CPU-sized setup: narrow networks, 2,000 + 2,000 iterations on 72 procedural tiles
    /// (64 for training, 8 held out). Loss weights, the 6:1 update ratio and the 10% critic
    /// learning rate are unchanged; the generator learning rate is raised to compensate for
    /// the shortened schedule.
    pub fn desk_scale() -> Self {
        let mut cfg = TrainConfig::default();
        cfg.generator.channels = vec![8, 16, 32, 32];
        cfg.generator.cond_hidden = 8;
        cfg.discriminator.convs = [(8, 1), (8, 2), (16, 1), (16, 2), (32, 1), (32, 2)]
            .into_iter()
            .map(|(width, stride)| ConvSpec { width, stride })
            .collect();
        cfg.discriminator.hidden = 64;
        let s = &mut cfg.schedule;
        (s.phase1_iters, s.phase2_iters) = (2_000, 2_000);
        (s.batch_size, s.lr_g) = (4, 5e-4);
        (s.validate_every, s.checkpoint_every) = (250, 1_000);
        cfg.data.synthetic = Some(SyntheticData {
            count: 72,
            size: 128,
            seed: 7,
        });
        cfg.data.val_count = 8;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.schedule.validate()?;
        self.sampler().validate().map_err(to_config)?;
        let p = self.schedule.patch_size;
        if self.discriminator.patch_size != p {
            return Err(Error::Config(format!(
                "critic patch size {} differs from the training patch size {p}",
                self.discriminator.patch_size
            )));
        }
        if p % self.generator.size_multiple() != 0 {
            return Err(Error::Config(format!(
                "patch size {p} is not divisible by {}",
                self.generator.size_multiple()
            )));
        }
        Ok(())
    }

    pub fn sampler(&self) -> PairSampler {
        PairSampler {
            degradation: self.degradation.clone(),
            augmentation: self.augmentation.clone(),
            patch_size: self.schedule.patch_size,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Parameter(m) => Error::Config(m),
        other => other,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Adversarial,
}

/// Schedule position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub phase1_steps: u64,
    pub phase2_g_steps: u64,
    pub phase2_d_steps: u64,
    pub phase1_complete: bool,
}

impl Position {
    pub fn g_steps(&self) -> u64 {
        self.phase1_steps + self.phase2_g_steps
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub g_step: u64,
    pub phase: Phase,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainEvent {
    GeneratorStep {
        phase: Phase,
        g_step: u64,
        loss: f64,
        lr_g: f64,
        lr_d: f64,
    },
    DiscriminatorStep {
        d_step: u64,
        loss: f64,
        lr_g: f64,
        lr_d: f64,
    },
    Validation(ValidationRecord),
    Checkpoint(PathBuf),
}

/// Validation-set averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityMetrics {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Evaluation-mode generator outputs for `pairs`, in unit range.
pub fn generate_pairs(
    gen: &Generator<f32>,
    pairs: &[TrainingPair],
    chunk: usize,
) -> Result<Vec<ImagePlane>> {
    let mut out = Vec::with_capacity(pairs.len());
    for part in pairs.chunks(chunk.max(1)) {
        let batch = PairedBatch::<f32>::from_pairs(part)?;
        let y = gen.forward(&batch.lr, Some(&batch.masks))?;
        for i in 0..part.len() {
            out.push(ImagePlane::from_tensor(&y, i, RangeTag::Signed)?.to_unit());
        }
    }
    Ok(out)
}

/// Mean MSE, PSNR and SSIM of the generator over `pairs`, computed in unit range.
pub fn validate(
    gen: &Generator<f32>,
    pairs: &[TrainingPair],
    chunk: usize,
) -> Result<QualityMetrics> {
    if pairs.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let outputs = generate_pairs(gen, pairs, chunk)?;
    let n = pairs.len() as f64;
    let (mut mse, mut psnr, mut ssim) = (0.0, 0.0, 0.0);
    for (p, y) in pairs.iter().zip(&outputs) {
        let e = metrics::mse(&p.hr, y)?;
        mse += e / n;
        psnr += metrics::psnr_from_mse(e) / n;
        ssim += metrics::ssim(&p.hr, y)? / n;
    }
    Ok(QualityMetrics { mse, psnr, ssim })
}

pub struct Trainer {
    config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    extractor: FeatureExtractor<f32>,
    sampler: PairSampler,
    train: Dataset,
    val: Vec<TrainingPair>,
    stream: EpochIterator,
    position: Position,
    history: Vec<ValidationRecord>,
    checkpoint_dir: Option<PathBuf>,
}

/// Running statistics of every normalization layer, for rollback after a failed step.
struct BufferSnapshot {
    generator: Vec<Vec<f32>>,
    discriminator: Vec<Vec<f32>>,
    stream: EpochState,
}

fn buffers(m: &impl Module<f32>) -> Vec<Vec<f32>> {
    let mut out = Vec::new();
    m.visit("", &mut |_, p| {
        if !p.is_trainable() {
            out.push(p.value.clone());
        }
    });
    out
}

fn restore_buffers(m: &mut impl Module<f32>, saved: &[Vec<f32>]) {
    let mut i = 0;
    m.visit_mut("", &mut |_, p| {
        if !p.is_trainable() {
            p.value.copy_from_slice(&saved[i]);
            i += 1;
        }
    });
}

fn grads_finite(m: &impl Module<f32>) -> bool {
    let mut ok = true;
    m.visit("", &mut |_, p| ok &= p.grad.iter().all(|g| g.is_finite()));
    ok
}

impl Trainer {
    /// Fresh networks and optimizer state derived from `config.seed`.
    pub fn new(config: TrainConfig, train: Dataset, val: Dataset) -> Result<Self> {
        config.validate()?;
        if val.is_empty() {
            return Err(Error::Config("validation set is empty".into()));
        }
        if train.classes != config.generator.classes || val.classes != config.generator.classes {
            return Err(Error::Config(format!(
                "dataset classes {:?} differ from the generator's {:?}",
                train.classes, config.generator.classes
            )));
        }
        let seed = config.seed;
        let generator = Generator::new(
            config.generator.clone(),
            &mut ChaCha8Rng::seed_from_u64(child_seed(seed, 1, 0)),
        )?;
        let discriminator = Discriminator::new(
            config.discriminator.clone(),
            &mut ChaCha8Rng::seed_from_u64(child_seed(seed, 2, 0)),
        )?;
        let stream = EpochIterator::resume(
            train.len(),
            config.schedule.batch_size,
            EpochState {
                seed: child_seed(seed, 3, 0),
                epoch: 0,
                cursor: 0,
            },
        )?;
        let sampler = config.sampler();
        let val_pairs = sampler.fixed_pairs(&val, child_seed(seed, 4, 0))?;
        let extractor = config.extractor.build()?;
        Ok(Trainer {
            opt_g: Adam::new(config.schedule.adam),
            opt_d: Adam::new(config.schedule.adam),
            config,
            generator,
            discriminator,
            extractor,
            sampler,
            train,
            val: val_pairs,
            stream,
            position: Position::default(),
            history: Vec::new(),
            checkpoint_dir: None,
        })
    }

    /// Periodic checkpoints (and the last good state after a failure) go to `dir`.
    pub fn set_checkpoint_dir(&mut self, dir: impl Into<PathBuf>) {
        self.checkpoint_dir = Some(dir.into());
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn position(&self) -> Position {
        self.position
    }

    /// Marks pretraining as done (or not), e.g. when starting from external weights.
    pub fn set_phase1_complete(&mut self, done: bool) {
        self.position.phase1_complete = done;
    }

    pub fn history(&self) -> &[ValidationRecord] {
        &self.history
    }

    pub fn generator(&self) -> &Generator<f32> {
        &self.generator
    }

    pub fn validation_pairs(&self) -> &[TrainingPair] {
        &self.val
    }

    pub fn extractor(&self) -> &FeatureExtractor<f32> {
        &self.extractor
    }

    fn learning_rates(&self) -> (f64, f64) {
        let s = &self.config.schedule;
        let (g, d) = (s.lr_g, s.lr_d());
        assert!(
            ((d / g) - s.lr_d_ratio).abs() <= 1e-12 * s.lr_d_ratio,
            "critic learning rate out of ratio"
        );
        (g, d)
    }

    pub fn evaluate(&self) -> Result<QualityMetrics> {
        validate(&self.generator, &self.val, self.config.schedule.batch_size)
    }

    fn snapshot(&self) -> BufferSnapshot {
        BufferSnapshot {
            generator: buffers(&self.generator),
            discriminator: buffers(&self.discriminator),
            stream: self.stream.state(),
        }
    }

    /// Rolls back a failed step, saves the last good state and builds the error.
    fn fail(&mut self, snap: BufferSnapshot, what: String) -> Error {
        restore_buffers(&mut self.generator, &snap.generator);
        restore_buffers(&mut self.discriminator, &snap.discriminator);
        self.stream = EpochIterator::resume(
            self.train.len(),
            self.config.schedule.batch_size,
            snap.stream,
        )
        .expect("stream parameters were valid before");
        self.generator.zero_grad();
        self.discriminator.zero_grad();
        let saved = match &self.checkpoint_dir {
            Some(dir) => {
                let path = dir.join("last_good.ckpt");
                match self.save_checkpoint(&path) {
                    Ok(()) => format!("last good state saved to {}", path.display()),
                    Err(e) => format!("saving the last good state failed: {e}"),
                }
            }
            None => "no checkpoint directory configured".to_string(),
        };
        Error::Numeric(format!(
            "{what} at generator step {}; {saved}",
            self.position.g_steps() + 1
        ))
    }

    fn next_batch(&mut self) -> Result<PairedBatch<f32>> {
        let plan = self.stream.next().expect("endless stream");
        self.sampler.batch(&self.train, &plan)
    }

    fn pretrain_step(&mut self) -> Result<f64> {
        let snap = self.snapshot();
        let batch = self.next_batch()?;
        self.generator.zero_grad();
        let (out, cache) = self
            .generator
            .forward_train(&batch.lr, Some(&batch.masks))?;
        let (loss, grad) = mse_with_grad(&batch.hr, &out)?;
        if !loss.is_finite() {
            return Err(self.fail(snap, format!("non-finite pixel loss {loss}")));
        }
        self.generator.backward(&cache, &grad);
        if !grads_finite(&self.generator) {
            return Err(self.fail(snap, "non-finite generator gradient".into()));
        }
        let (lr_g, _) = self.learning_rates();
        self.opt_g.step(&mut self.generator, lr_g);
        Ok(loss as f64)
    }

    fn adversarial_g_step(&mut self) -> Result<f64> {
        let snap = self.snapshot();
        let batch = self.next_batch()?;
        self.generator.zero_grad();
        let (fake, cache) = self
            .generator
            .forward_train(&batch.lr, Some(&batch.masks))?;
        let target = self.extractor.features(&batch.hr)?;
        let (l_vgg, d_vgg) = perceptual_with_grad(&target, &fake, &self.extractor)?;
        let (probs, d_cache) = self.discriminator.forward_train(&fake)?;
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(self.fail(snap, "non-finite critic output".into()));
        }
        let (l_adv, d_prob) = adv_gen_with_grad(&probs)?;
        let w = self.config.schedule.weights;
        let loss = match total_loss(l_vgg as f64, l_adv as f64, &w) {
            Ok(l) => l,
            Err(Error::Numeric(m)) => return Err(self.fail(snap, m)),
            Err(e) => return Err(e),
        };
        let d_adv = self.discriminator.backward(&d_cache, &d_prob);
        // only the generator is updated in this step
        self.discriminator.zero_grad();
        let (a, g) = (w.alpha as f32, w.gamma as f32);
        let grad = d_vgg.zip_map(&d_adv, |p, q| a * p + g * q);
        self.generator.backward(&cache, &grad);
        if !grads_finite(&self.generator) {
            return Err(self.fail(snap, "non-finite generator gradient".into()));
        }
        let (lr_g, _) = self.learning_rates();
        self.opt_g.step(&mut self.generator, lr_g);
        Ok(loss)
    }

    fn d_step(&mut self) -> Result<f64> {
        let snap = self.snapshot();
        let batch = self.next_batch()?;
        self.discriminator.zero_grad();
        let (fake, _) = self
            .generator
            .forward_train(&batch.lr, Some(&batch.masks))?;
        self.generator.zero_grad();
        let (p_real, c_real) = self.discriminator.forward_train(&batch.hr)?;
        let (p_fake, c_fake) = self.discriminator.forward_train(&fake)?;
        if p_real.iter().chain(&p_fake).any(|p| !p.is_finite()) {
            return Err(self.fail(snap, "non-finite critic output".into()));
        }
        let (loss, d_real, d_fake) = adv_disc_with_grad(&p_real, &p_fake)?;
        self.discriminator.backward(&c_real, &d_real);
        self.discriminator.backward(&c_fake, &d_fake);
        if !loss.is_finite() || !grads_finite(&self.discriminator) {
            return Err(self.fail(snap, format!("non-finite critic loss or gradient ({loss})")));
        }
        let (_, lr_d) = self.learning_rates();
        self.opt_d.step(&mut self.discriminator, lr_d);
        Ok(loss as f64)
    }

    /// Validation and checkpointing after a completed unit of work.
    fn after_unit(&mut self, phase: Phase, obs: &mut dyn FnMut(&TrainEvent)) -> Result<()> {
        let s = &self.config.schedule;
        let step = self.position.g_steps();
        if s.validate_every > 0 && step % s.validate_every == 0 {
            let m = self.evaluate()?;
            let rec = ValidationRecord {
                g_step: step,
                phase,
                mse: m.mse,
                psnr: m.psnr,
                ssim: m.ssim,
            };
            log::info!(
                "step {step} ({phase:?}): val mse {:.5} psnr {:.2} ssim {:.4}",
                m.mse,
                m.psnr,
                m.ssim
            );
            self.history.push(rec);
            obs(&TrainEvent::Validation(rec));
        }
        if s.checkpoint_every > 0 && step % s.checkpoint_every == 0 {
            if let Some(dir) = self.checkpoint_dir.clone() {
                let path = dir.join(format!("step_{step:08}.ckpt"));
                self.save_checkpoint(&path)?;
                obs(&TrainEvent::Checkpoint(path));
            }
        }
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.position.phase1_complete
            && self.position.phase2_g_steps >= self.config.schedule.phase2_iters
    }

    /// One generator update, plus the critic update when the cycle completes.
    fn unit(&mut self, obs: &mut dyn FnMut(&TrainEvent)) -> Result<()> {
        let (lr_g, lr_d) = self.learning_rates();
        if !self.position.phase1_complete {
            if self.position.phase1_steps < self.config.schedule.phase1_iters {
                let loss = self.pretrain_step()?;
                self.position.phase1_steps += 1;
                obs(&TrainEvent::GeneratorStep {
                    phase: Phase::Pretrain,
                    g_step: self.position.g_steps(),
                    loss,
                    lr_g,
                    lr_d,
                });
                self.after_unit(Phase::Pretrain, obs)?;
            }
            if self.position.phase1_steps >= self.config.schedule.phase1_iters {
                self.position.phase1_complete = true;
            }
            return Ok(());
        }
        let loss = self.adversarial_g_step()?;
        self.position.phase2_g_steps += 1;
        obs(&TrainEvent::GeneratorStep {
            phase: Phase::Adversarial,
            g_step: self.position.g_steps(),
            loss,
            lr_g,
            lr_d,
        });
        if self.position.phase2_g_steps % self.config.schedule.g_steps_per_d_step == 0 {
            let loss = self.d_step()?;
            self.position.phase2_d_steps += 1;
            obs(&TrainEvent::DiscriminatorStep {
                d_step: self.position.phase2_d_steps,
                loss,
                lr_g,
                lr_d,
            });
        }
        self.after_unit(Phase::Adversarial, obs)
    }

    /// Runs pretraining to completion. The critic is not touched.
    pub fn pretrain_mse(&mut self, obs: &mut dyn FnMut(&TrainEvent)) -> Result<()> {
        while !self.position.phase1_complete {
            self.unit(obs)?;
        }
        Ok(())
    }

    /// Runs the adversarial phase to completion.
    pub fn train_adversarial(&mut self, obs: &mut dyn FnMut(&TrainEvent)) -> Result<()> {
        if !self.position.phase1_complete {
            if self.config.schedule.require_pretrained {
                return Err(Error::Config(
                    "generator has not completed MSE pretraining; run phase 1 or disable require_pretrained".into(),
                ));
            }
            self.position.phase1_complete = true;
        }
        while !self.is_finished() {
            self.unit(obs)?;
        }
        Ok(())
    }

    /// Runs both phases until the schedule completes or `g_steps` generator updates are done.
    pub fn run_until(&mut self, g_steps: u64, obs: &mut dyn FnMut(&TrainEvent)) -> Result<()> {
        while !self.is_finished() && self.position.g_steps() < g_steps {
            self.unit(obs)?;
        }
        // an empty pretraining phase completes without work
        if !self.position.phase1_complete
            && self.position.phase1_steps >= self.config.schedule.phase1_iters
        {
            self.position.phase1_complete = true;
        }
        Ok(())
    }

    pub fn run(&mut self, obs: &mut dyn FnMut(&TrainEvent)) -> Result<()> {
        self.run_until(u64::MAX, obs)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(json!({
            "kind": CHECKPOINT_KIND,
            "config": self.config,
            "position": self.position,
            "stream": self.stream.state(),
            "opt_g_steps": self.opt_g.steps(),
            "opt_d_steps": self.opt_d.steps(),
            "history": self.history,
        }));
        c.push_module("g", &self.generator);
        c.push_module("d", &self.discriminator);
        self.opt_g.save_into(&mut c, "opt_g");
        self.opt_d.save_into(&mut c, "opt_d");
        c
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    /// Restores a run saved with [`Trainer::save_checkpoint`]; the datasets must be the ones the
    /// run was started with.
    pub fn resume(path: &Path, train: Dataset, val: Dataset) -> Result<Self> {
        let c = Container::load(path)?;
        let meta = CheckpointMeta::parse(&c, path)?;
        let mut t = Trainer::new(meta.config, train, val)?;
        c.load_module("g", &mut t.generator)?;
        c.load_module("d", &mut t.discriminator)?;
        let adam = t.config.schedule.adam;
        t.opt_g = Adam::load_from(&c, "opt_g", adam, meta.opt_g_steps, &t.generator)?;
        t.opt_d = Adam::load_from(&c, "opt_d", adam, meta.opt_d_steps, &t.discriminator)?;
        t.stream = EpochIterator::resume(t.train.len(), t.config.schedule.batch_size, meta.stream)?;
        t.position = meta.position;
        t.history = meta.history;
        Ok(t)
    }
}

#[derive(Deserialize)]
struct CheckpointMeta {
    kind: String,
    config: TrainConfig,
    position: Position,
    stream: EpochState,
    opt_g_steps: u64,
    opt_d_steps: u64,
    history: Vec<ValidationRecord>,
}

impl CheckpointMeta {
    fn parse(c: &Container, path: &Path) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_value(c.meta.clone())
            .map_err(|e| Error::format(path, format!("bad checkpoint metadata: {e}")))?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(Error::format(
                path,
                format!("expected a {CHECKPOINT_KIND}, found {}", meta.kind),
            ));
        }
        Ok(meta)
    }
}

/// The generator stored in a checkpoint, plus its training configuration.
pub fn load_generator(path: &Path) -> Result<(Generator<f32>, TrainConfig)> {
    let c = Container::load(path)?;
    let meta = CheckpointMeta::parse(&c, path)?;
    let mut g = Generator::new(
        meta.config.generator.clone(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    c.load_module("g", &mut g)?;
    Ok((g, meta.config))
}
