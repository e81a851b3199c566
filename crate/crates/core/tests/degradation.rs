//! Degradation stages against brute-force oracles written without the library's helpers.

mod common;

use common::oracles::*;
use common::rng;
use proptest::prelude::*;
use rand::Rng;
use semsr::data::augment::{apply_exponent, invert, simulate_lr};
use semsr::data::degrade::gaussian_kernel;
use semsr::data::{
    gaussian_blur, resample, simulate_pair, AugmentationParams, DegradationParams, Direction,
    ResampleMode,
};
use semsr::metrics::laplacian_energy;
use semsr::{ColorImage, Error, ImagePlane, RangeTag};

const TOL: f64 = 1e-6;

#[test]
fn blur_matches_direct_convolution() {
    let mut r = rng(100);
    for _ in 0..12 {
        let (h, w) = (r.random_range(3..14), r.random_range(3..14));
        let sigma = r.random_range(0.4..2.5);
        let img = random_plane(h, w, &mut r);
        let got = gaussian_blur(&img, sigma).unwrap();
        assert!(
            max_diff(got.values(), &blur_oracle(&img, sigma)) <= TOL,
            "{h}x{w} sigma {sigma}"
        );
    }
}

#[test]
fn blur_of_a_ramp_and_an_impulse() {
    let ramp = ImagePlane::new(
        5,
        5,
        (0..25).map(|i| i as f32 / 24.0).collect(),
        RangeTag::Unit,
    )
    .unwrap();
    let got = gaussian_blur(&ramp, 1.0).unwrap();
    assert!(max_diff(got.values(), &blur_oracle(&ramp, 1.0)) <= TOL);

    let n = 31;
    let mut v = vec![0.0f32; n * n];
    v[(n / 2) * n + n / 2] = 1.0;
    let impulse = ImagePlane::new(n, n, v, RangeTag::Unit).unwrap();
    let out = gaussian_blur(&impulse, 3.0).unwrap();
    let k = gaussian_kernel(3.0).unwrap();
    let r = k.len() / 2;
    for dy in 0..k.len() {
        for dx in 0..k.len() {
            let want = k[dy] * k[dx];
            assert!((out.get(n / 2 + dy - r, n / 2 + dx - r) as f64 - want).abs() <= TOL);
        }
    }
    assert!(matches!(
        gaussian_blur(&ramp, 0.0),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn resampling_matches_oracles() {
    let mut r = rng(200);
    for _ in 0..12 {
        let f = r.random_range(1..5);
        let (h, w) = (f * r.random_range(1..6), f * r.random_range(1..6));
        let img = random_plane(h, w, &mut r);
        let down = resample(&img, f, Direction::Down, ResampleMode::Bilinear).unwrap();
        assert_eq!(down.dims(), (h / f, w / f));
        assert!(max_diff(down.values(), &bilinear_down_oracle(&img, f)) <= TOL);
        let up = resample(&img, f, Direction::Up, ResampleMode::Nearest).unwrap();
        assert_eq!(up.dims(), (h * f, w * f));
        assert!(max_diff(up.values(), &nearest_up_oracle(&img, f)) <= TOL);
    }
}

#[test]
fn two_by_two_checkerboard_averages_to_one_half() {
    let img = ImagePlane::new(2, 2, vec![0.0, 1.0, 1.0, 0.0], RangeTag::Unit).unwrap();
    let out = resample(&img, 2, Direction::Down, ResampleMode::Bilinear).unwrap();
    assert_eq!(out.dims(), (1, 1));
    assert!((out.get(0, 0) - 0.5).abs() < 1e-7);
    assert!(matches!(
        resample(&img, 3, Direction::Down, ResampleMode::Bilinear),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn inversion_and_exponent_match_pointwise_oracles() {
    let mut r = rng(300);
    for _ in 0..12 {
        let img = random_plane(r.random_range(1..9), r.random_range(1..9), &mut r);
        let e = r.random_range(0.25..=4.0);
        let inv: Vec<f64> = img.values().iter().map(|&v| 1.0 - v as f64).collect();
        assert!(max_diff(invert(&img).values(), &inv) <= TOL);
        let pow: Vec<f64> = img.values().iter().map(|&v| (v as f64).powf(e)).collect();
        assert!(max_diff(apply_exponent(&img, e).values(), &pow) <= TOL);
    }
}

#[test]
fn dimension_chain_256_32_256() {
    let img = random_plane(256, 256, &mut rng(400));
    let deg = DegradationParams::default();
    assert_eq!((deg.blur_sigma, deg.down_factor), (3.0, 8));
    let down = resample(&img, deg.down_factor, Direction::Down, deg.down_mode).unwrap();
    assert_eq!(down.dims(), (32, 32));
    let up = resample(&down, deg.down_factor, Direction::Up, deg.up_mode).unwrap();
    assert_eq!(up.dims(), (256, 256));
}

fn two_tone_card() -> ColorImage {
    let plane = |a: f32, b: f32| {
        ImagePlane::new(
            16,
            16,
            (0..256)
                .map(|i| if (i % 16) < 6 || i / 16 > 11 { a } else { b })
                .collect(),
            RangeTag::Unit,
        )
        .unwrap()
    };
    ColorImage::new(plane(0.9, 0.2), plane(0.7, 0.4), plane(0.1, 0.8)).unwrap()
}

#[test]
fn simulated_pair_is_the_composition_of_the_stages() {
    let card = two_tone_card();
    let deg = DegradationParams::default();
    for channel in 0..3 {
        let (lr, hr) = simulate_pair(&card, &deg, channel, 2.0).unwrap();
        let src = &card.channels[channel];
        let hr_oracle: Vec<f64> = src
            .values()
            .iter()
            .map(|&v| (1.0 - v as f64).powi(2))
            .collect();
        assert!(max_diff(hr.values(), &hr_oracle) <= TOL);
        let blurred = gaussian_blur(&hr, 3.0).unwrap();
        assert!(max_diff(blurred.values(), &blur_oracle(&hr, 3.0)) <= TOL);
        let low = ImagePlane::new(
            2,
            2,
            bilinear_down_oracle(&blurred, 8)
                .iter()
                .map(|&v| v as f32)
                .collect(),
            RangeTag::Unit,
        )
        .unwrap();
        assert!(max_diff(lr.values(), &nearest_up_oracle(&low, 8)) <= TOL);
        assert_eq!(lr.dims(), hr.dims());
        assert!(laplacian_energy(&lr) < laplacian_energy(&hr));
    }
}

#[test]
fn white_card_gives_a_black_pair_and_identity_pipeline_is_exact() {
    let white = ImagePlane::constant(16, 16, 1.0, RangeTag::Unit).unwrap();
    let c = ColorImage::new(white.clone(), white.clone(), white).unwrap();
    let (lr, hr) = simulate_lr(
        &c,
        &DegradationParams::default(),
        &AugmentationParams::identity(),
        &mut rng(1),
    )
    .unwrap();
    assert!(lr.values().iter().chain(hr.values()).all(|&v| v == 0.0));

    let identity = DegradationParams {
        down_factor: 1,
        blur_sigma: 1e-3,
        invert: false,
        ..DegradationParams::default()
    };
    let card = two_tone_card();
    let (lr, hr) = simulate_pair(&card, &identity, 1, 1.0).unwrap();
    assert_eq!(lr.values(), hr.values());
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let card = two_tone_card();
    let (deg, aug) = (DegradationParams::default(), AugmentationParams::default());
    let a = simulate_lr(&card, &deg, &aug, &mut rng(5)).unwrap();
    let b = simulate_lr(&card, &deg, &aug, &mut rng(5)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn every_stage_preserves_constants(c in 0.0f32..=1.0, f in 1usize..5, k in 1usize..4, sigma in 0.3f64..4.0) {
        let img = ImagePlane::constant(f * k, f * k + f, c, RangeTag::Unit).unwrap();
        let blurred = gaussian_blur(&img, sigma).unwrap();
        prop_assert!(blurred.values().iter().all(|v| (v - c).abs() < 1e-6));
        for mode in [ResampleMode::Bilinear, ResampleMode::Nearest] {
            for dir in [Direction::Down, Direction::Up] {
                let out = resample(&img, f, dir, mode).unwrap();
                prop_assert!(out.values().iter().all(|v| (v - c).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn pairs_keep_equal_dimensions(k in 1usize..4, e in 0.25f64..4.0, channel in 0usize..3) {
        let n = 8 * k;
        let plane = ImagePlane::new(n, n, (0..n * n).map(|i| ((i * 37) % 101) as f32 / 100.0).collect(), RangeTag::Unit).unwrap();
        let c = ColorImage::new(plane.clone(), plane.clone(), plane).unwrap();
        let (lr, hr) = simulate_pair(&c, &DegradationParams::default(), channel, e).unwrap();
        prop_assert_eq!(lr.dims(), hr.dims());
        prop_assert!(lr.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
