//! Worked loss examples and an independent forward oracle for the perceptual loss.

mod common;

use std::f64::consts::LN_2;

use common::{random_tensor, rng};
use proptest::prelude::*;
use semsr::losses::*;
use semsr::{Error, ImagePlane, RangeTag, Tensor};

fn plane(v: &[f32], h: usize, w: usize) -> ImagePlane {
    ImagePlane::new(h, w, v.to_vec(), RangeTag::Unit).unwrap()
}

#[test]
fn mse_worked_examples() {
    let a = plane(&[0.0, 1.0, 1.0, 0.0], 2, 2);
    let b = plane(&[1.0, 1.0, 0.0, 0.0], 2, 2);
    assert_eq!(mse_loss(&a, &b).unwrap(), 0.5);
    assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
    let c = plane(&[0.75; 6], 2, 3);
    let d = plane(&[0.25; 6], 2, 3);
    assert_eq!(mse_loss(&c, &d).unwrap(), 0.25);
    assert!(matches!(mse_loss(&a, &c), Err(Error::Dimension(_))));
}

#[test]
fn adversarial_worked_examples() {
    assert!(adv_gen_loss(1.0).unwrap() < 1e-6);
    assert!((adv_gen_loss(0.5).unwrap() - LN_2).abs() < 1e-9);
    assert!((adv_gen_loss((-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-9);
    assert!(adv_gen_loss(0.0).unwrap().is_finite());

    assert!(adv_disc_loss(1.0, 0.0).unwrap() < 1e-6);
    assert!((adv_disc_loss(0.5, 0.5).unwrap() - 2.0 * LN_2).abs() < 1e-9);
    assert!((adv_disc_loss(0.9, 0.1).unwrap() - (-2.0 * 0.9f64.ln())).abs() < 1e-9);

    for bad in [-0.1, 1.1, f64::NAN] {
        assert!(matches!(adv_gen_loss(bad), Err(Error::Input(_))));
        assert!(matches!(adv_disc_loss(bad, 0.5), Err(Error::Input(_))));
        assert!(matches!(adv_disc_loss(0.5, bad), Err(Error::Input(_))));
    }
}

#[test]
fn total_loss_weighting() {
    let w = LossWeights::default();
    assert_eq!((w.alpha, w.gamma), (0.01, 0.005));
    assert!((total_loss(1.0, 1.0, &w).unwrap() - 0.015).abs() < 1e-15);
    assert_eq!(total_loss(0.0, 0.0, &w).unwrap(), 0.0);
    let no_alpha = LossWeights {
        alpha: 0.0,
        gamma: 0.005,
    };
    assert_eq!(total_loss(3.7, 2.0, &no_alpha).unwrap(), 0.005 * 2.0);
    assert!(matches!(
        total_loss(f64::NAN, 1.0, &w),
        Err(Error::Numeric(_))
    ));
    assert!(matches!(
        total_loss(1.0, f64::INFINITY, &w),
        Err(Error::Numeric(_))
    ));
}

#[test]
fn identity_extractor_reduces_to_pixel_mse() {
    let fx = ExtractorConfig::Identity.build::<f64>().unwrap();
    let mut r = rng(3);
    let a = random_tensor([2, 1, 6, 6], &mut r);
    let b = random_tensor([2, 1, 6, 6], &mut r);
    assert_eq!(perceptual_loss(&a, &b, &fx).unwrap(), mse(&a, &b).unwrap());
    assert_eq!(perceptual_loss(&a, &a, &fx).unwrap(), 0.0);
}

/// Direct-loop forward pass of a conv → ReLU (→ 2×2 max-pool) stack on one image.
fn oracle_features(
    fx: &ConvFeatureExtractor<f64>,
    img: &[f64],
    h: usize,
    w: usize,
) -> Vec<Vec<f64>> {
    let p = &fx.preprocess;
    let mut maps: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            img.iter()
                .map(|&v| ((v + 1.0) / 2.0 - p.mean[c]) / p.std[c])
                .collect()
        })
        .collect();
    let (mut h, mut w) = (h, w);
    for (spec, conv) in &fx.layers {
        let cin = maps.len();
        let mut out = vec![vec![0.0; h * w]; spec.width];
        for (o, plane) in out.iter_mut().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = conv.bias.value[o];
                    for (i, m) in maps.iter().enumerate() {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) =
                                    (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += conv.weight.value[((o * cin + i) * 3 + ky) * 3 + kx]
                                    * m[sy as usize * w + sx as usize];
                            }
                        }
                    }
                    plane[y * w + x] = acc.max(0.0);
                }
            }
        }
        if spec.pool {
            let (ph, pw) = (h / 2, w / 2);
            out = out
                .iter()
                .map(|m| {
                    (0..ph * pw)
                        .map(|i| {
                            let (y, x) = (2 * (i / pw), 2 * (i % pw));
                            m[y * w + x]
                                .max(m[y * w + x + 1])
                                .max(m[(y + 1) * w + x])
                                .max(m[(y + 1) * w + x + 1])
                        })
                        .collect()
                })
                .collect();
            (h, w) = (ph, pw);
        }
        maps = out;
    }
    maps
}

#[test]
fn random_extractor_matches_direct_oracle() {
    let cfg = ExtractorConfig::default();
    let FeatureExtractor::Conv(conv_fx) = cfg.build::<f64>().unwrap() else {
        panic!("default extractor is convolutional");
    };
    let fx = FeatureExtractor::Conv(conv_fx.clone());
    let mut r = rng(11);
    let a = random_tensor([1, 1, 8, 8], &mut r);
    let b = random_tensor([1, 1, 8, 8], &mut r);
    let fa = oracle_features(&conv_fx, a.data(), 8, 8);
    let fb = oracle_features(&conv_fx, b.data(), 8, 8);
    let count = fa.iter().map(Vec::len).sum::<usize>() as f64;
    let expected: f64 = fa
        .iter()
        .flatten()
        .zip(fb.iter().flatten())
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        / count;
    let got = perceptual_loss(&a, &b, &fx).unwrap();
    assert!(
        (got - expected).abs() <= 1e-12 * expected.max(1.0),
        "{got} vs {expected}"
    );
    assert_eq!(perceptual_loss(&a, &a, &fx).unwrap(), 0.0);
}

#[test]
fn extractor_weights_survive_a_file_round_trip() {
    let FeatureExtractor::Conv(fx) = ExtractorConfig::default().build::<f32>().unwrap() else {
        unreachable!()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fx.bin");
    fx.to_container().save(&path).unwrap();
    let loaded = ExtractorConfig::File { path }.build::<f32>().unwrap();
    let x = Tensor::<f32>::full([1, 1, 8, 8], 0.3);
    let before = FeatureExtractor::Conv(fx).features(&x).unwrap();
    assert_eq!(before.data(), loaded.features(&x).unwrap().data());
}

proptest! {
    #[test]
    fn adversarial_losses_are_finite_and_non_negative(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let g = adv_gen_loss(p).unwrap();
        let d = adv_disc_loss(p, q).unwrap();
        prop_assert!(g.is_finite() && g >= 0.0);
        prop_assert!(d.is_finite() && d >= 0.0);
    }

    #[test]
    fn pixel_mse_is_symmetric_and_bounded(v in prop::collection::vec((0.0f32..=1.0, 0.0f32..=1.0), 1..40)) {
        let (a, b): (Vec<f32>, Vec<f32>) = v.into_iter().unzip();
        let n = a.len();
        let (pa, pb) = (plane(&a, 1, n), plane(&b, 1, n));
        let l = mse_loss(&pa, &pb).unwrap();
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert_eq!(l, mse_loss(&pb, &pa).unwrap());
    }
}
