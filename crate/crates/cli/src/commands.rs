use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use semsr::data::io::{load_band, save_gray16};
use semsr::data::{materialize, AugmentationParams, DegradationParams, Manifest, MaskSource};
use semsr::inference::{self, InferOptions, TileConfig};
use semsr::metrics;
use semsr::trainer::{TrainConfig, TrainEvent, Trainer, ValidationRecord};
use semsr::{Error, GanMode, ImagePlane, RangeTag, Result};

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes the fully resolved configuration next to the outputs.
fn echo_config<T: Serialize>(cfg: &T, path: &Path) -> Result<()> {
    let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    manifest: PathBuf,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    degradation: DegradationParams,
    #[serde(default)]
    augmentation: AugmentationParams,
}

pub fn simulate(config: &Path, seed: Option<u64>, out: &Path, data_root: &Path) -> Result<()> {
    let mut cfg: SimulateConfig = read_toml(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let manifest_path = data_root.join(&cfg.manifest);
    let manifest = Manifest::load(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(data_root);
    create_dir(out)?;
    echo_config(&cfg, &out.join("simulate.toml"))?;
    let report = materialize(
        &manifest,
        base,
        out,
        &cfg.degradation,
        &cfg.augmentation,
        cfg.seed,
    )?;
    log::info!("wrote {} pairs to {}", report.written, out.display());
    if report.failures.is_empty() {
        return Ok(());
    }
    for (i, msg) in &report.failures {
        eprintln!("entry {i}: {msg}");
    }
    Err(Error::Input(format!(
        "{} of {} entries failed",
        report.failures.len(),
        manifest.entries.len()
    )))
}

fn csv_row(r: &ValidationRecord) -> String {
    format!(
        "{},{:?},{:.8},{:.6},{:.6}\n",
        r.g_step, r.phase, r.mse, r.psnr, r.ssim
    )
    .to_lowercase()
}

pub fn train(
    config: Option<&Path>,
    seed: Option<u64>,
    mode: Option<GanMode>,
    checkpoint: Option<&Path>,
    out: &Path,
    data_root: &Path,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => read_toml::<TrainConfig>(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = mode {
        cfg.generator.mode = m;
    }
    create_dir(out)?;
    let mut trainer = match checkpoint {
        Some(ckpt) => {
            let (saved, _) = semsr::trainer::load_generator(ckpt)?;
            let (train, val) = cfg.data.load(data_root)?;
            let t = Trainer::resume(ckpt, train, val)?;
            if mode.is_some_and(|m| m != saved.mode()) {
                return Err(Error::Config(format!(
                    "--mode {} conflicts with the checkpoint's {}",
                    mode.unwrap().as_str(),
                    saved.mode().as_str()
                )));
            }
            t
        }
        None => {
            cfg.validate()?;
            let (train, val) = cfg.data.load(data_root)?;
            Trainer::new(cfg, train, val)?
        }
    };
    echo_config(trainer.config(), &out.join("train.toml"))?;
    trainer.set_checkpoint_dir(out.join("checkpoints"));

    let log_path = out.join("metrics.csv");
    let mut log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut text = String::from("g_step,phase,mse,psnr,ssim\n");
    trainer
        .history()
        .iter()
        .for_each(|r| text.push_str(&csv_row(r)));
    log.write_all(text.as_bytes())
        .map_err(|e| Error::io(&log_path, e))?;
    let mut write_err = None;
    let result = trainer.run(&mut |ev| match ev {
        TrainEvent::Validation(r) => {
            if let Err(e) = log.write_all(csv_row(r).as_bytes()) {
                write_err.get_or_insert(Error::io(&log_path, e));
            }
        }
        TrainEvent::Checkpoint(p) => log::info!("checkpoint {}", p.display()),
        _ => {}
    });
    result?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let final_path = out.join("final.ckpt");
    trainer.save_checkpoint(&final_path)?;
    log::info!("saved {}", final_path.display());
    Ok(())
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InferConfig {
    percentile: Option<f64>,
    tiles: TileConfig,
}

pub fn infer(
    checkpoint: &Path,
    band: &Path,
    masks: Vec<PathBuf>,
    classes: Option<Vec<String>>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let mut cfg: InferConfig = match config {
        Some(p) => read_toml(p)?,
        None => InferConfig::default(),
    };
    let percentile = *cfg.percentile.get_or_insert(90.0);
    let mut opts = InferOptions::new(band, checkpoint, out);
    opts.percentile = percentile;
    opts.tiles = cfg.tiles;
    opts.mask_classes = classes;
    opts.masks = match masks.len() {
        0 => None,
        1 => Some(MaskSource::Indexed(masks[0].clone())),
        _ => Some(MaskSource::Planes(masks)),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    echo_config(&cfg, &out.with_extension("toml"))?;
    let report = inference::infer(&opts)?;
    println!(
        "{}x{} in {:.2} s ({:.2} s/MPx; reference {:.1} s/MPx), {} tiles",
        report.height,
        report.width,
        report.seconds,
        report.seconds_per_megapixel,
        report.reference_seconds_per_megapixel,
        report.tile_layout.tiles()
    );
    Ok(())
}

fn load_unit(path: &Path) -> Result<ImagePlane> {
    let (h, w, v) = load_band(path)?;
    ImagePlane::clamped(h, w, v, RangeTag::Unit)
}

fn finite_or_text(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

pub fn eval(sr: &Path, reference: &Path, input: Option<&Path>, out: &Path) -> Result<()> {
    let sr_img = load_unit(sr)?;
    let ref_img = load_unit(reference)?;
    let psnr = metrics::psnr(&sr_img, &ref_img)?;
    let ssim = metrics::ssim(&sr_img, &ref_img)?;
    let mse = metrics::mse(&sr_img, &ref_img)?;
    create_dir(out)?;
    let mut panels = Vec::new();
    let input_img = input.map(load_unit).transpose()?;
    let mut report = json!({
        "sr": sr,
        "reference": reference,
        "mse": mse,
        "psnr": finite_or_text(psnr),
        "ssim": ssim,
    });
    if let Some(lr) = &input_img {
        let p = metrics::psnr(lr, &ref_img)?;
        report["input_psnr"] = finite_or_text(p);
        panels.push(lr);
    }
    panels.push(&sr_img);
    panels.push(&ref_img);
    save_gray16(&out.join("panel.png"), &metrics::comparison_panel(&panels)?)?;
    let path = out.join("metrics.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("PSNR {psnr:.3} dB, SSIM {ssim:.4}");
    Ok(())
}
