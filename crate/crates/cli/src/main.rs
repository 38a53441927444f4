//! `vk`: command-line front end for the Volterra-kernel toolkit.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage
//! and input errors.

mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use volterra_core::VolterraError;

#[derive(Debug, Parser)]
#[command(name = "vk", version, about = "Volterra-kernel algebra for convolutional networks")]
pub struct Cli {
    /// Override the default tolerance of the selected check.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run numerical identity checks and emit a CSV of deviations.
    Validate(ValidateArgs),
    /// Convert a network description into truncated Volterra kernels.
    Convert(ConvertArgs),
    /// Fit an order-one proxy kernel to a network used as a black box.
    Hack(HackArgs),
    /// Perturbation bounds, crafted perturbations and the spike experiment.
    #[command(subcommand)]
    Perturb(PerturbCommand),
    /// Low-rank propagation experiments.
    Rank(RankArgs),
    /// Composed geometry of stacked layers, each given as `kernel,stride,pad`.
    Geometry(GeometryArgs),
    /// Reverse every axis of a kernel (minus-type to plus-type and back).
    Flip(FlipArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValidateWhich {
    Properties,
    ConvActConv,
    #[value(name = "volterra-22")]
    Volterra22,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub which: ValidateWhich,
    #[arg(long)]
    pub seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub order: usize,
    /// Output prefix; files are `<prefix>_H<n>.vten` and `<prefix>_geometry.json`.
    #[arg(long)]
    pub out: String,
    #[arg(long, default_value_t = 6)]
    pub max_order: usize,
    #[arg(long, default_value_t = 32)]
    pub max_extent: usize,
}

#[derive(Debug, Args)]
pub struct HackArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    #[arg(long, default_value_t = 0)]
    pub p: usize,
    /// Defaults to `8 * (k + 1)`.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Input length; defaults to the network's `input_length` or 64.
    #[arg(long)]
    pub length: Option<usize>,
    /// Use conjugate gradients instead of the closed-form solve.
    #[arg(long)]
    pub iterative: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Compare with the order-one kernel of the network converted at this order.
    #[arg(long)]
    pub reference: Option<usize>,
    /// Output prefix; files are `<prefix>_w.vten` and `<prefix>_report.json`.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum PerturbCommand {
    /// Per-order deviation of a converted network under a spike, with bounds.
    Bound(BoundArgs),
    /// Craft spectrum-matching perturbations and report energy gains.
    Craft(CraftArgs),
    /// Random-kernel spike experiment across orders.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub order: usize,
    /// Draws the input when `--x` is absent.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Perturbation file; defaults to a midpoint spike of height `--spike`.
    #[arg(long)]
    pub eps: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub spike: f64,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Raw,
    Image,
}

#[derive(Debug, Args)]
pub struct CraftArgs {
    /// Target kernel; drawn at random (extent 9) when absent.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Input signal; drawn at random (length 64) when absent.
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Raw)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Smallest acceptable fraction of trials with energy gain above 1.
    #[arg(long, default_value_t = 0.8)]
    pub min_fraction: f64,
    /// Write the perturbation of trial 0.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub spike: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub min_order: usize,
    #[arg(long, default_value_t = 8)]
    pub max_order: usize,
    #[arg(long, default_value_t = 32)]
    pub length: usize,
    #[arg(long, default_value_t = 5)]
    pub extent: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// `oconv-1d`, `conv-2d`, `conv-3d`, `oconv-mixed` or `all`.
    #[arg(long)]
    pub experiment: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(required = true)]
    pub layers: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FlipArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] VolterraError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("VK_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("VK_THREADS must be a positive integer, got `{value}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| cmd::run(&cli));
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
