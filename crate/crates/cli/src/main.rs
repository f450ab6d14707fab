//! `condsqz`: simulate, analyze and fit conditional squeezing records.
//!
//! Exit codes: 0 success, 1 other failure (for example an unwritable output
//! directory), 2 configuration or usage error, 3 data error, 4 fit did not
//! converge. Flags override config keys, which override built-in defaults.
//! `CONDSQZ_WORKERS` sets the worker count (default: available parallelism).

mod commands;
mod config;
mod error;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use config::{Format, RunConfig};
use error::CliError;
use output::OutputDir;

pub const WORKERS_ENV: &str = "CONDSQZ_WORKERS";

#[derive(Parser)]
#[command(name = "condsqz", version, about = "Conditional squeezing simulator and analysis pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides synthesis.seed (simulate) or fit.options.seed (fit).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Spectrum file format; overrides output.format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize signal and idler records, one CSV per signal angle.
    Simulate,
    /// Estimate spectra, Wiener gains, the spectrogram and the angle trajectory.
    Analyze {
        /// Record CSV files, or directories holding record*.csv files.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Sample rate in Hz; overrides `# fs=` file headers.
        #[arg(long)]
        sample_rate: Option<f64>,
        /// Replace the estimated gain by zero.
        #[arg(long)]
        zero_gain: bool,
    },
    /// Fit model parameters to records.
    Fit {
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        sample_rate: Option<f64>,
    },
    /// Fit an equivalent detuned filter cavity to an angle trajectory CSV.
    CavityEquiv {
        /// `freq_hz,angle_deg` CSV as written by `analyze`.
        #[arg(long)]
        trajectory: PathBuf,
        /// Overrides cavity.finesse.
        #[arg(long)]
        finesse: Option<f64>,
    },
    /// Write analytical model spectra and figures of merit.
    Predict,
    /// Summarize the result files in the output directory.
    Report,
}

fn init_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Other(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_workers()?;
    let c = cli.common;
    let cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::empty(),
    };
    let format = c.format.unwrap_or(cfg.output.format);
    let dir = c.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("condsqz-out"));
    let out = || OutputDir::create(dir.clone(), format);
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, c.seed, out()?),
        Command::Analyze { data, sample_rate, zero_gain } => commands::analyze(&cfg, &data, sample_rate, zero_gain, out()?),
        Command::Fit { data, sample_rate } => commands::fit(&cfg, &data, sample_rate, c.seed, out()?),
        Command::CavityEquiv { trajectory, finesse } => commands::cavity_equiv(&cfg, &trajectory, finesse, out()?),
        Command::Predict => commands::predict(&cfg, out()?),
        Command::Report => {
            let text = commands::report(&dir, format)?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("condsqz: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
