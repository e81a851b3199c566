//! `semsr` command-line front end: simulate, train, infer and eval.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semsr::{Error, GanMode};

#[derive(Parser)]
#[command(
    name = "semsr",
    version,
    about = "Class-conditioned GAN super-resolution for single-band images"
)]
struct Cli {
    /// Root against which relative data paths (manifests) are resolved.
    #[arg(long, env = "SEMSR_DATA_ROOT", default_value = ".", global = true)]
    data_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated low/high resolution pairs for every manifest entry.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a generator and critic; writes checkpoints and a metrics log.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<GanMode>,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Super-resolve a single-band image with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        band: PathBuf,
        /// An index mask, or one raster per class in class order.
        #[arg(long, num_args = 1..)]
        masks: Vec<PathBuf>,
        /// Comma-separated class order of the mask rasters.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        /// Tiling and normalization settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a super-resolved image against a reference.
    Eval {
        #[arg(long)]
        sr: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Low-resolution input, shown first in the comparison panel.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<GanMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// 0 success, 2 configuration, 3 input, 4 numeric, 1 anything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) => 2,
        Error::Input(_)
        | Error::Dimension(_)
        | Error::Degenerate(_)
        | Error::Format { .. }
        | Error::Image { .. }
        | Error::Io { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed, out } => {
            commands::simulate(&config, seed, &out, &cli.data_root)
        }
        Command::Train {
            config,
            seed,
            mode,
            checkpoint,
            out,
        } => commands::train(
            config.as_deref(),
            seed,
            mode,
            checkpoint.as_deref(),
            &out,
            &cli.data_root,
        ),
        Command::Infer {
            checkpoint,
            band,
            masks,
            classes,
            config,
            out,
        } => commands::infer(&checkpoint, &band, masks, classes, config.as_deref(), &out),
        Command::Eval {
            sr,
            reference,
            input,
            out,
        } => commands::eval(&sr, &reference, input.as_deref(), &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
