//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.
//!
//! The desk-scale run (criterion 6) trains for tens of minutes on one core; criteria 7 and 9
//! reuse its generator.

mod common;

use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::grads::{self, SEEDS};
use common::oracles::*;
use common::{
    random_masks, random_tensor, reduce, rng, tiny_data, tiny_train_config, toy_generator_config,
};
use rand::Rng;
use semsr::data::augment::{apply_exponent, invert};
use semsr::data::io::{save_gray16, save_index_mask};
use semsr::data::synthetic::synthetic_band;
use semsr::data::{
    gaussian_blur, resample, DegradationParams, Direction, MaskSource, ResampleMode,
};
use semsr::generator::GeneratorConfig;
use semsr::inference::{infer, InferOptions, REFERENCE_SECONDS_PER_MEGAPIXEL};
use semsr::losses::{adv_disc_loss, adv_gen_loss, mse_loss, total_loss, LossWeights};
use semsr::metrics::{laplacian_energy, psnr};
use semsr::nn::Module;
use semsr::trainer::{generate_pairs, Phase, TrainConfig, TrainEvent, Trainer};
use semsr::{ClassMaskStack, GanMode, Generator, ImagePlane, RangeTag};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed <= limit, || {
        format!(
            "{what} took {:.1} s, limit {} s",
            elapsed.as_secs_f64(),
            limit.as_secs()
        )
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let plane = |v: &[f32], h, w| ImagePlane::new(h, w, v.to_vec(), RangeTag::Unit).unwrap();
    let (a, b) = (
        plane(&[0.0, 1.0, 1.0, 0.0], 2, 2),
        plane(&[1.0, 1.0, 0.0, 0.0], 2, 2),
    );
    ensure(mse_loss(&a, &b).unwrap() == 0.5, || {
        "MSE of the 2×2 example is not 0.5".into()
    })?;
    ensure(mse_loss(&a, &a).unwrap() == 0.0, || {
        "MSE of an image with itself is not 0".into()
    })?;
    let (c, d) = (plane(&[0.75; 6], 2, 3), plane(&[0.25; 6], 2, 3));
    ensure(mse_loss(&c, &d).unwrap() == 0.25, || {
        "MSE of a constant 0.5 offset is not 0.25".into()
    })?;
    let g = adv_gen_loss(0.5).unwrap();
    ensure((g - LN_2).abs() < 1e-9, || {
        format!("generator loss at 0.5 is {g}")
    })?;
    ensure(adv_gen_loss(1.0).unwrap() < 1e-6, || {
        "generator loss at 1 is not ~0".into()
    })?;
    let dl = adv_disc_loss(0.5, 0.5).unwrap();
    ensure((dl - 2.0 * LN_2).abs() < 1e-9, || {
        format!("critic loss at 0.5/0.5 is {dl}")
    })?;
    let w = LossWeights::default();
    ensure((w.alpha, w.gamma) == (0.01, 0.005), || {
        format!("weights {w:?}")
    })?;
    let t = total_loss(1.0, 1.0, &w).unwrap();
    ensure((t - 0.015).abs() < 1e-15, || format!("weighted total {t}"))?;
    within(start.elapsed(), Duration::from_secs(1), "loss suite")?;
    Ok(format!(
        "MSE, ln 2 and 0.015 examples exact; {:.1} ms",
        start.elapsed().as_secs_f64() * 1e3
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let checks = grads::all();
    for (name, check) in &checks {
        for seed in SEEDS {
            check(seed).map_err(|e| format!("{name}, seed {seed}: {e}"))?;
        }
    }
    within(start.elapsed(), Duration::from_secs(120), "gradient checks")?;
    Ok(format!(
        "{} components × {} seeds within relative 1e-3; {:.1} s",
        checks.len(),
        SEEDS.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    const TOL: f64 = 1e-6;
    const IMAGES: usize = 12;
    let mut r = rng(300);
    let mut worst = 0.0f64;
    for _ in 0..IMAGES {
        let (h, w) = (r.random_range(3..14), r.random_range(3..14));
        let sigma = r.random_range(0.4..2.5);
        let img = random_plane(h, w, &mut r);
        worst = worst.max(max_diff(
            gaussian_blur(&img, sigma).unwrap().values(),
            &blur_oracle(&img, sigma),
        ));

        let f = r.random_range(1..5);
        let img = random_plane(f * r.random_range(1..6), f * r.random_range(1..6), &mut r);
        let down = resample(&img, f, Direction::Down, ResampleMode::Bilinear).unwrap();
        worst = worst.max(max_diff(down.values(), &bilinear_down_oracle(&img, f)));
        let up = resample(&img, f, Direction::Up, ResampleMode::Nearest).unwrap();
        worst = worst.max(max_diff(up.values(), &nearest_up_oracle(&img, f)));

        let e = r.random_range(0.25..=4.0);
        let pow: Vec<f64> = img.values().iter().map(|&v| (v as f64).powf(e)).collect();
        worst = worst.max(max_diff(apply_exponent(&img, e).values(), &pow));
        let inv: Vec<f64> = img.values().iter().map(|&v| 1.0 - v as f64).collect();
        worst = worst.max(max_diff(invert(&img).values(), &inv));
    }
    ensure(worst <= TOL, || {
        format!("largest oracle deviation {worst:e}")
    })?;

    let deg = DegradationParams::default();
    let img = random_plane(256, 256, &mut r);
    let down = resample(&img, deg.down_factor, Direction::Down, deg.down_mode).unwrap();
    let up = resample(&down, deg.down_factor, Direction::Up, deg.up_mode).unwrap();
    ensure(down.dims() == (32, 32) && up.dims() == (256, 256), || {
        format!("chain gave {:?} then {:?}", down.dims(), up.dims())
    })?;
    Ok(format!(
        "blur, bilinear down, nearest up, exponent, invert on {IMAGES} images each, max deviation {worst:.1e}; 256→32→256"
    ))
}

fn criterion_4() -> Outcome {
    let (tr, va) = tiny_data();
    let mut t = Trainer::new(tiny_train_config(GanMode::Conditional, 0, 600), tr, va)
        .map_err(|e| e.to_string())?;
    let (mut g, mut d, mut bad_ratio) = (0u64, 0u64, 0usize);
    let mut check = |lr_g: f64, lr_d: f64| {
        if (lr_d / lr_g - 0.1).abs() > 1e-12 {
            bad_ratio += 1;
        }
    };
    t.run(&mut |ev| match *ev {
        TrainEvent::GeneratorStep {
            phase, lr_g, lr_d, ..
        } => {
            assert_eq!(phase, Phase::Adversarial);
            g += 1;
            check(lr_g, lr_d);
        }
        TrainEvent::DiscriminatorStep { lr_g, lr_d, .. } => {
            d += 1;
            check(lr_g, lr_d);
        }
        _ => {}
    })
    .map_err(|e| e.to_string())?;
    ensure((g, d) == (600, 100), || {
        format!("{g} generator and {d} critic updates")
    })?;
    ensure(bad_ratio == 0, || {
        format!("{bad_ratio} steps with lr_d/lr_g != 0.1")
    })?;
    Ok("600 generator updates, 100 critic updates, lr_d/lr_g = 0.1 at all 700 steps".into())
}

fn criterion_5() -> Outcome {
    let wide = GeneratorConfig {
        channels: vec![8, 16, 32, 32],
        cond_hidden: 8,
        ..toy_generator_config(GanMode::Conditional)
    };
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (base, size) in [(toy_generator_config(GanMode::Conditional), 8), (wide, 32)] {
        for seed in SEEDS {
            let mut r = rng(seed);
            let ucfg = GeneratorConfig {
                mode: GanMode::Unconditional,
                ..base.clone()
            };
            let mut u = Generator::<f64>::new(ucfg, &mut r).unwrap();
            let mut c = Generator::<f64>::new(base.clone(), &mut r).unwrap();
            let x = random_tensor([2, 1, size, size], &mut r);
            u.forward_train(&x, None).unwrap();
            reduce(&mut c, &u);
            let m = random_masks(2, 3, size, size, &mut r);
            worst = worst.max(
                c.forward(&x, Some(&m))
                    .unwrap()
                    .max_abs_diff(&u.forward(&x, None).unwrap()),
            );
            let (yc, _) = c.forward_train(&x, Some(&m)).unwrap();
            let (yu, _) = u.forward_train(&x, None).unwrap();
            worst = worst.max(yc.max_abs_diff(&yu));
            cases += 1;
        }
    }
    ensure(worst <= 1e-6, || format!("max-abs difference {worst:e}"))?;
    Ok(format!(
        "{cases} weight draws, eval and training mode, max-abs difference {worst:.1e}"
    ))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = tiny_train_config(GanMode::Conditional, 7, 19);
    cfg.schedule.validate_every = 5;
    let (tr, va) = tiny_data();
    let mut whole = Trainer::new(cfg.clone(), tr, va).map_err(|e| e.to_string())?;
    whole.run(&mut |_| {}).map_err(|e| e.to_string())?;
    let reference = whole.to_container().to_bytes().map_err(|e| e.to_string())?;
    let stops = [1, 7, 8, 13, 25];
    for stop in stops {
        let (tr, va) = tiny_data();
        let mut t = Trainer::new(cfg.clone(), tr, va).map_err(|e| e.to_string())?;
        t.run_until(stop, &mut |_| {}).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{stop}.ckpt"));
        t.save_checkpoint(&path).map_err(|e| e.to_string())?;
        drop(t);
        let (tr, va) = tiny_data();
        let mut resumed = Trainer::resume(&path, tr, va).map_err(|e| e.to_string())?;
        resumed.run(&mut |_| {}).map_err(|e| e.to_string())?;
        let bytes = resumed
            .to_container()
            .to_bytes()
            .map_err(|e| e.to_string())?;
        ensure(bytes == reference, || {
            format!("resume after {stop} generator updates diverged")
        })?;
    }
    Ok(format!(
        "resumed at {stops:?} of 26 updates; every final checkpoint byte-identical"
    ))
}

/// State shared by the desk-scale criteria.
struct Desk {
    trainer: Trainer,
}

fn mean_laplacian(outputs: &[ImagePlane]) -> f64 {
    outputs.iter().map(laplacian_energy).sum::<f64>() / outputs.len() as f64
}

fn criterion_6(desk: &mut Option<Desk>) -> Outcome {
    let start = Instant::now();
    let cfg = TrainConfig::desk_scale();
    let (tr, va) = cfg.data.load(Path::new(".")).map_err(|e| e.to_string())?;
    let images = tr.len() + va.len();
    ensure(images >= 64, || format!("only {images} images"))?;
    let s = cfg.schedule.clone();
    ensure(
        s.patch_size == 96 && s.phase1_iters >= 2000 && s.phase2_iters >= 2000,
        || format!("{s:?}"),
    )?;
    let mut t = Trainer::new(cfg, tr, va).map_err(|e| e.to_string())?;
    let pairs = t.validation_pairs().to_vec();
    let baseline = pairs
        .iter()
        .map(|p| psnr(&p.lr, &p.hr).unwrap())
        .sum::<f64>()
        / pairs.len() as f64;
    let init = t.evaluate().map_err(|e| e.to_string())?;
    let mut progress = |ev: &TrainEvent| {
        if let TrainEvent::Validation(r) = ev {
            println!(
                "    step {:>5} {:<11} mse {:.5} psnr {:.2} dB ({:.0} s)",
                r.g_step,
                format!("{:?}", r.phase).to_lowercase(),
                r.mse,
                r.psnr,
                start.elapsed().as_secs_f64()
            );
        }
    };
    t.pretrain_mse(&mut progress).map_err(|e| e.to_string())?;
    let p1 = t.evaluate().map_err(|e| e.to_string())?;
    let lap1 =
        mean_laplacian(&generate_pairs(t.generator(), &pairs, 4).map_err(|e| e.to_string())?);
    t.train_adversarial(&mut progress)
        .map_err(|e| e.to_string())?;
    let p2 = t.evaluate().map_err(|e| e.to_string())?;
    let lap2 =
        mean_laplacian(&generate_pairs(t.generator(), &pairs, 4).map_err(|e| e.to_string())?);
    let elapsed = start.elapsed();
    *desk = Some(Desk { trainer: t });

    let reduction = 1.0 - p1.mse / init.mse;
    let gain = p2.psnr - baseline;
    let summary = format!(
        "{images} images; val MSE {:.5} → {:.5} after pretraining ({:.0}% lower); \
         PSNR {:.2} dB after adversarial phase vs nearest {baseline:.2} dB ({gain:+.2} dB); \
         Laplacian energy {lap1:.2e} → {lap2:.2e}; {:.1} min",
        init.mse,
        p1.mse,
        100.0 * reduction,
        p2.psnr,
        elapsed.as_secs_f64() / 60.0
    );
    println!("    {summary}");
    ensure(reduction >= 0.5, || {
        format!("MSE reduced by only {:.0}%", 100.0 * reduction)
    })?;
    ensure(gain >= 1.0, || {
        format!("PSNR gain over nearest neighbour {gain:+.2} dB")
    })?;
    ensure(lap2 > lap1, || {
        format!("Laplacian energy did not rise: {lap1:e} → {lap2:e}")
    })?;
    within(elapsed, Duration::from_secs(3600), "desk-scale run")?;
    Ok(summary)
}

fn swap_region(m: &ClassMaskStack, top: usize, left: usize, size: usize) -> ClassMaskStack {
    let (h, w) = m.dims();
    let mut idx = m.to_indices();
    for y in top..top + size {
        for x in left..left + size {
            idx[y * w + x] = (idx[y * w + x] + 1) % 3;
        }
    }
    ClassMaskStack::from_indices(m.classes().to_vec(), h, w, &idx).unwrap()
}

fn region_mad(a: &ImagePlane, b: &ImagePlane, top: usize, left: usize, size: usize) -> f64 {
    let mut s = 0.0;
    for y in top..top + size {
        for x in left..left + size {
            s += (a.get(y, x) as f64 - b.get(y, x) as f64).abs();
        }
    }
    s / (size * size) as f64
}

fn criterion_7(desk: &Option<Desk>) -> Outcome {
    let desk = desk.as_ref().ok_or("no trained desk-scale generator")?;
    let c = desk.trainer.generator();
    ensure(c.mode() == GanMode::Conditional, || {
        "desk model is not conditional".into()
    })?;
    // the unconditional twin shares every weight the trained model has outside its branches
    let mut u = Generator::<f32>::new(
        GeneratorConfig {
            mode: GanMode::Unconditional,
            ..c.config().clone()
        },
        &mut rng(0),
    )
    .unwrap();
    let mut shared = std::collections::HashMap::new();
    c.visit("", &mut |n, p| {
        shared.insert(n.to_string(), p.value.clone());
    });
    u.visit_mut("", &mut |n, p| p.value.clone_from(&shared[n]));

    let (top, left, size) = (24, 24, 48);
    let (mut c_min, mut u_max) = (f64::INFINITY, 0.0f64);
    for p in desk.trainer.validation_pairs() {
        let swapped = swap_region(&p.masks, top, left, size);
        let a = c.generate(&p.lr, Some(&p.masks)).unwrap();
        let b = c.generate(&p.lr, Some(&swapped)).unwrap();
        c_min = c_min.min(region_mad(&a, &b, top, left, size));
        let ua = u.generate(&p.lr, Some(&p.masks)).unwrap();
        let ub = u.generate(&p.lr, Some(&swapped)).unwrap();
        u_max = u_max.max(
            ua.values()
                .iter()
                .zip(ub.values())
                .map(|(x, y)| (x - y).abs() as f64)
                .fold(0.0, f64::max),
        );
    }
    ensure(c_min > 0.0, || {
        "swapping classes left a C-GAN output unchanged".into()
    })?;
    ensure(u_max == 0.0, || format!("U-GAN output moved by {u_max:e}"))?;
    Ok(format!(
        "class swap in a {size}×{size} region: C-GAN mean-abs change ≥ {c_min:.2e} on every validation image; U-GAN change exactly 0"
    ))
}

fn criterion_9(desk: &Option<Desk>) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ckpt = dir.path().join("desk.ckpt");
    match desk {
        Some(d) => d.trainer.save_checkpoint(&ckpt),
        None => {
            let cfg = TrainConfig::desk_scale();
            let (tr, va) = cfg.data.load(Path::new(".")).map_err(|e| e.to_string())?;
            Trainer::new(cfg, tr, va).and_then(|t| t.save_checkpoint(&ckpt))
        }
    }
    .map_err(|e| e.to_string())?;
    let (h, w, band, masks) = synthetic_band(1024, 77).map_err(|e| e.to_string())?;
    let scale = band.iter().fold(0.0f32, |m, &v| m.max(v));
    let band_path = dir.path().join("band.png");
    let unit = ImagePlane::new(
        h,
        w,
        band.iter().map(|v| v / scale).collect(),
        RangeTag::Unit,
    )
    .unwrap();
    save_gray16(&band_path, &unit).map_err(|e| e.to_string())?;
    let mask_path = dir.path().join("masks.png");
    save_index_mask(&mask_path, &masks).map_err(|e| e.to_string())?;
    let mut opts = InferOptions::new(&band_path, &ckpt, dir.path().join("sr.png"));
    opts.masks = Some(MaskSource::Indexed(mask_path));
    let report = infer(&opts).map_err(|e| e.to_string())?;
    ensure((report.height, report.width) == (h, w), || {
        "output size differs from the input".into()
    })?;
    ensure(report.seconds <= 120.0, || {
        format!("{:.1} s for {:.2} MPx", report.seconds, report.megapixels)
    })?;
    Ok(format!(
        "{h}×{w} ({:.2} MPx) in {:.2} s ({:.2} s/MPx; GPU reference {REFERENCE_SECONDS_PER_MEGAPIXEL} s/MPx); {} tiles",
        report.megapixels,
        report.seconds,
        report.seconds_per_megapixel,
        report.tile_layout.tiles()
    ))
}

fn main() {
    let mut desk = None;
    let mut results = Vec::new();
    let mut record = |n: usize, title: &str, f: &mut dyn FnMut() -> Outcome| {
        println!("criterion {n}: {title} ...");
        let outcome = catch_unwind(AssertUnwindSafe(&mut *f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match &outcome {
            Ok(detail) => format!("PASS criterion {n} ({title}): {detail}"),
            Err(why) => format!("FAIL criterion {n} ({title}): {why}"),
        };
        println!("{line}");
        results.push((outcome.is_ok(), line));
    };
    record(1, "loss unit suite", &mut criterion_1);
    record(2, "gradient correctness", &mut criterion_2);
    record(3, "degradation oracles", &mut criterion_3);
    record(4, "schedule invariants", &mut criterion_4);
    record(
        5,
        "reduction to the unconditional generator",
        &mut criterion_5,
    );
    record(8, "checkpoint round-trip", &mut criterion_8);
    record(6, "desk-scale end-to-end", &mut || criterion_6(&mut desk));
    record(7, "conditioning sensitivity", &mut || criterion_7(&desk));
    record(9, "throughput", &mut || criterion_9(&desk));

    println!("\nsummary");
    for (_, line) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|r| !r.0).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
