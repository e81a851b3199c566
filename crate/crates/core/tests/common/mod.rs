#![allow(dead_code)]

pub mod grads;
pub mod oracles;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsr::data::synthetic::synthetic_dataset;
use semsr::data::Dataset;
use semsr::discriminator::{ConvSpec, DiscriminatorConfig};
use semsr::image::default_classes;
use semsr::losses::{ExtractorConfig, ExtractorLayer};
use semsr::nn::Module;
use semsr::trainer::TrainConfig;
use semsr::{GanMode, Generator, GeneratorConfig, Tensor};

pub const FD_STEP: f64 = 1e-6;
pub const FD_RTOL: f64 = 1e-3;
/// Absolute floor under which a gradient counts as zero; far below any signal we check.
pub const FD_ATOL: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: [usize; 4], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// One-hot masks with a random class per pixel.
pub fn random_masks(
    n: usize,
    classes: usize,
    h: usize,
    w: usize,
    rng: &mut impl Rng,
) -> Tensor<f64> {
    let mut t = Tensor::zeros([n, classes, h, w]);
    for b in 0..n {
        for i in 0..h * w {
            let k = rng.random_range(0..classes);
            t.plane_mut(b, k)[i] = 1.0;
        }
    }
    t
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= FD_RTOL * analytic.abs().max(numeric.abs()) + FD_ATOL
}

/// Central difference, or either one-sided difference when a ReLU kink lies inside the
/// stencil: the backward passes return the derivative of one side at a kink.
fn agrees(analytic: f64, up: f64, mid: f64, down: f64) -> Result<(), f64> {
    let central = (up - down) / (2.0 * FD_STEP);
    let sides = [(up - mid) / FD_STEP, (mid - down) / FD_STEP];
    if close(analytic, central) || sides.iter().any(|&s| close(analytic, s)) {
        Ok(())
    } else {
        Err(central)
    }
}

fn perturb<M: Module<f64>>(m: &mut M, name: &str, index: usize, delta: f64) {
    m.visit_mut("", &mut |n, p| {
        if n == name {
            p.value[index] += delta;
        }
    });
}

/// Compares the gradients already accumulated in `m` against central differences of `loss`,
/// on up to `per_param` random entries of every trainable parameter.
pub fn check_params<M: Module<f64>>(
    m: &mut M,
    loss: &mut dyn FnMut(&mut M) -> f64,
    per_param: usize,
    rng: &mut impl Rng,
) -> Result<usize, String> {
    let mut grads = Vec::new();
    m.visit("", &mut |n, p| {
        if p.is_trainable() {
            grads.push((n.to_string(), p.grad.clone()));
        }
    });
    let mut checked = 0;
    for (name, grad) in grads {
        let picks: Vec<usize> = if grad.len() <= per_param {
            (0..grad.len()).collect()
        } else {
            (0..per_param)
                .map(|_| rng.random_range(0..grad.len()))
                .collect()
        };
        for i in picks {
            let mid = loss(m);
            perturb(m, &name, i, FD_STEP);
            let up = loss(m);
            perturb(m, &name, i, -2.0 * FD_STEP);
            let down = loss(m);
            perturb(m, &name, i, FD_STEP);
            if let Err(numeric) = agrees(grad[i], up, mid, down) {
                return Err(format!(
                    "{name}[{i}]: analytic {} numeric {numeric}",
                    grad[i]
                ));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Compares `grad` against central differences of `loss` at `x`, on up to `samples` entries.
pub fn check_input(
    x: &Tensor<f64>,
    grad: &Tensor<f64>,
    loss: &mut dyn FnMut(&Tensor<f64>) -> f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<usize, String> {
    let mut probe = x.clone();
    for _ in 0..samples.min(x.len()) {
        let i = rng.random_range(0..x.len());
        let orig = probe.data()[i];
        let mid = loss(&probe);
        probe.data_mut()[i] = orig + FD_STEP;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        if let Err(numeric) = agrees(grad.data()[i], up, mid, down) {
            return Err(format!(
                "input[{i}]: analytic {} numeric {numeric}",
                grad.data()[i]
            ));
        }
    }
    Ok(samples.min(x.len()))
}

pub fn toy_generator_config(mode: GanMode) -> GeneratorConfig {
    GeneratorConfig {
        mode,
        channels: vec![3, 4, 5],
        classes: default_classes(),
        cond_hidden: 3,
    }
}

pub fn toy_discriminator_config(patch: usize) -> DiscriminatorConfig {
    DiscriminatorConfig {
        convs: vec![
            ConvSpec {
                width: 3,
                stride: 1,
            },
            ConvSpec {
                width: 4,
                stride: 2,
            },
            ConvSpec {
                width: 4,
                stride: 2,
            },
        ],
        hidden: 5,
        patch_size: patch,
    }
}

/// A few-second training setup: toy networks, 16×16 patches, pixel-space perceptual loss.
pub fn tiny_train_config(mode: GanMode, phase1: u64, phase2: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = 21;
    cfg.generator = GeneratorConfig {
        channels: vec![4, 6, 8],
        ..toy_generator_config(mode)
    };
    cfg.discriminator = toy_discriminator_config(16);
    cfg.extractor = ExtractorConfig::Random {
        layers: vec![ExtractorLayer {
            width: 4,
            pool: false,
        }],
        seed: 3,
    };
    let s = &mut cfg.schedule;
    (s.phase1_iters, s.phase2_iters) = (phase1, phase2);
    (s.batch_size, s.patch_size) = (2, 16);
    (s.validate_every, s.checkpoint_every) = (0, 0);
    cfg.data.val_count = 2;
    cfg
}

pub fn tiny_data() -> (Dataset, Dataset) {
    synthetic_dataset(8, 32, 5).unwrap().split(2).unwrap()
}

/// Copies every parameter the U-GAN owns into the C-GAN by name, then neutralizes the branches.
pub fn reduce(c: &mut Generator<f64>, u: &Generator<f64>) {
    let mut shared = HashMap::new();
    u.visit("", &mut |n, p| {
        shared.insert(n.to_string(), p.value.clone());
    });
    let mut copied = 0;
    c.visit_mut("", &mut |n, p| {
        if let Some(v) = shared.get(n) {
            p.value.clone_from(v);
            copied += 1;
        }
    });
    assert_eq!(
        copied,
        shared.len(),
        "every U-GAN tensor has a C-GAN counterpart"
    );
    c.neutralize_conditioning();
}
