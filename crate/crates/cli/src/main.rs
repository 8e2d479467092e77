//! `hdst`: synthesize noisy cubes, train the denoiser, run it, and score
//! the result. Exit codes: 0 success, 2 configuration, 3 I/O, 4 numeric.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::Result;

#[derive(Parser)]
#[command(name = "hdst", version, about = "Hyperspectral denoising workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every config-driven subcommand.
#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; omitted sections take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; rederives the train and noise seeds from one value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override one config key by dotted path, e.g. train.epochs=300.
    /// Repeatable; applied in order after the file is read.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.set, self.seed)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt a clean cube with a seeded noise pattern.
    Synthesize(RunArgs),
    /// Fit the network on clean/noisy patch pairs.
    Train(RunArgs),
    /// Run a trained checkpoint over a cube, tile by tile.
    Denoise(RunArgs),
    /// Score a cube against a reference and write the report.
    Evaluate(RunArgs),
    /// Print the ablation grid with parameter and MAC counts.
    Inspect(RunArgs),
    /// Dump cube bands as 16-bit grayscale PGM images.
    Export {
        /// Cube to read.
        cube: PathBuf,
        /// Single band index; all bands when omitted.
        #[arg(long)]
        band: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Wrap a headerless little-endian f32 array into the cube container.
    Convert {
        /// Raw band-major f32 file.
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        bands: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Wavelength coverage in nm as "lo,hi".
        #[arg(long)]
        wavelength: Option<String>,
        /// Destination cube path.
        #[arg(long)]
        out_file: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize(args) => commands::synthesize::run(&args.load()?, &args.out),
        Command::Train(args) => commands::train::run(&args.load()?, &args.out),
        Command::Denoise(args) => commands::denoise::run(&args.load()?, &args.out),
        Command::Evaluate(args) => commands::evaluate::run(&args.load()?, &args.out),
        Command::Inspect(args) => commands::inspect::run(&args.load()?),
        Command::Export { cube, band, out } => commands::export::run(&cube, band, &out),
        Command::Convert {
            raw,
            bands,
            height,
            width,
            wavelength,
            out_file,
        } => commands::convert::run(&raw, bands, height, width, wavelength.as_deref(), &out_file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
