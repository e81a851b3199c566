//! Finite-difference checks of every hand-written backward pass, one seed per call.

use rand::Rng;
use semsr::cond_norm::CondNorm;
use semsr::discriminator::Discriminator;
use semsr::losses::{
    adv_disc_with_grad, adv_gen_with_grad, mse, mse_with_grad, perceptual_loss,
    perceptual_with_grad, ExtractorConfig, ExtractorLayer,
};
use semsr::nn::Module;
use semsr::{GanMode, Generator, Tensor};

use super::*;

pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub type Check = Result<(), String>;

pub fn cond_norm(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut layer = CondNorm::<f64>::new(4, 3, 5, &mut r);
    let x = random_tensor([2, 4, 6, 5], &mut r);
    let masks = random_masks(2, 3, 6, 5, &mut r);
    let w = random_tensor([2, 4, 6, 5], &mut r);
    let (_, cache) = layer.forward_train(&x, &masks).map_err(|e| e.to_string())?;
    layer.zero_grad();
    let dx = layer.backward(&cache, &w);
    let mut loss = |l: &mut CondNorm<f64>| dot(&l.forward_train(&x, &masks).unwrap().0, &w);
    let n = check_params(&mut layer, &mut loss, 8, &mut r)?;
    if n <= 20 {
        return Err(format!("only {n} parameter entries checked"));
    }
    let mut probe = layer.clone();
    let mut loss_x = |t: &Tensor<f64>| dot(&probe.forward_train(t, &masks).unwrap().0, &w);
    check_input(&x, &dx, &mut loss_x, 30, &mut r).map(drop)
}

pub fn generator(mode: GanMode, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut gen =
        Generator::<f64>::new(toy_generator_config(mode), &mut r).map_err(|e| e.to_string())?;
    let x = random_tensor([2, 1, 8, 8], &mut r);
    let masks = (mode == GanMode::Conditional).then(|| random_masks(2, 3, 8, 8, &mut r));
    let w = random_tensor([2, 1, 8, 8], &mut r);
    let (_, cache) = gen
        .forward_train(&x, masks.as_ref())
        .map_err(|e| e.to_string())?;
    gen.zero_grad();
    gen.backward(&cache, &w);
    let mut loss =
        |g: &mut Generator<f64>| dot(&g.forward_train(&x, masks.as_ref()).unwrap().0, &w);
    check_params(&mut gen, &mut loss, 4, &mut r).map(drop)
}

pub fn discriminator(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut d = Discriminator::<f64>::new(toy_discriminator_config(8), &mut r)
        .map_err(|e| e.to_string())?;
    let x = random_tensor([3, 1, 8, 8], &mut r);
    let w: Vec<f64> = random_tensor([3, 1, 1, 1], &mut r).into_vec();
    let score = |p: &[f64]| p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let (_, cache) = d.forward_train(&x).map_err(|e| e.to_string())?;
    d.zero_grad();
    let dx = d.backward(&cache, &w);
    let mut loss = |m: &mut Discriminator<f64>| score(&m.forward_train(&x).unwrap().0);
    check_params(&mut d, &mut loss, 6, &mut r)?;
    let mut probe = d.clone();
    let mut loss_x = |t: &Tensor<f64>| score(&probe.forward_train(t).unwrap().0);
    check_input(&x, &dx, &mut loss_x, 30, &mut r).map(drop)
}

pub fn pixel_loss(seed: u64) -> Check {
    let mut r = rng(seed);
    let t = random_tensor([2, 1, 5, 7], &mut r);
    let g = random_tensor([2, 1, 5, 7], &mut r);
    let (_, dg) = mse_with_grad(&t, &g).map_err(|e| e.to_string())?;
    check_input(&g, &dg, &mut |x| mse(&t, x).unwrap(), 40, &mut r).map(drop)
}

pub fn perceptual(seed: u64) -> Check {
    let cfg = ExtractorConfig::Random {
        layers: vec![
            ExtractorLayer {
                width: 4,
                pool: false,
            },
            ExtractorLayer {
                width: 5,
                pool: true,
            },
        ],
        seed: 9,
    };
    let fx = cfg.build::<f64>().map_err(|e| e.to_string())?;
    let mut r = rng(seed);
    let t = random_tensor([2, 1, 8, 8], &mut r);
    let g = random_tensor([2, 1, 8, 8], &mut r);
    let (_, dg) =
        perceptual_with_grad(&fx.features(&t).unwrap(), &g, &fx).map_err(|e| e.to_string())?;
    check_input(
        &g,
        &dg,
        &mut |x| perceptual_loss(&t, x, &fx).unwrap(),
        40,
        &mut r,
    )
    .map(drop)
}

fn probs(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.05..0.95)).collect()
}

fn scalar_grads(p: &[f64], grad: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Check {
    for i in 0..p.len() {
        let mut q = p.to_vec();
        q[i] += FD_STEP;
        let up = f(&q);
        q[i] -= 2.0 * FD_STEP;
        let down = f(&q);
        let numeric = (up - down) / (2.0 * FD_STEP);
        if !close(grad[i], numeric) {
            return Err(format!("entry {i}: analytic {} numeric {numeric}", grad[i]));
        }
    }
    Ok(())
}

pub fn adversarial(seed: u64) -> Check {
    let mut r = rng(seed);
    let p = probs(6, &mut r);
    let (_, g) = adv_gen_with_grad(&p).map_err(|e| e.to_string())?;
    scalar_grads(&p, &g, &|q| adv_gen_with_grad(q).unwrap().0)?;
    let (real, fake) = (probs(6, &mut r), probs(6, &mut r));
    let (_, dr, df) = adv_disc_with_grad(&real, &fake).map_err(|e| e.to_string())?;
    scalar_grads(&real, &dr, &|q| adv_disc_with_grad(q, &fake).unwrap().0)?;
    scalar_grads(&fake, &df, &|q| adv_disc_with_grad(&real, q).unwrap().0)
}

/// Every check above on every seed, labelled.
pub fn all() -> Vec<(&'static str, fn(u64) -> Check)> {
    vec![
        ("cond_norm", cond_norm),
        ("conditional generator", |s| {
            generator(GanMode::Conditional, s)
        }),
        ("unconditional generator", |s| {
            generator(GanMode::Unconditional, s)
        }),
        ("discriminator", discriminator),
        ("pixel loss", pixel_loss),
        ("perceptual loss", perceptual),
        ("adversarial losses", adversarial),
    ]
}
