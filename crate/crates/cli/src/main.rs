//! `nfconv`: fit sparse kernels, train integral fields, convolve and evaluate.

mod commands;
mod config;
mod error;
mod log;
mod signal;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{CliError, CliResult};
use log::Log;

#[derive(Debug, Parser)]
#[command(
    name = "nfconv",
    version,
    about = "Continuous convolution through repeated integral fields"
)]
pub struct Cli {
    /// TOML file with defaults for any command (flags take precedence).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Emit progress and results as newline-delimited JSON on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit or transform sparse Dirac kernels.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Train repeated integral fields.
    #[command(subcommand)]
    Field(FieldCommand),
    /// Convolve with a trained field or compute a Monte Carlo reference.
    #[command(subcommand)]
    Conv(ConvCommand),
    /// Compare two signals.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Subcommand)]
pub enum KernelCommand {
    /// Fit a sparse Dirac mixture to an analytic kernel.
    Fit(KernelFitArgs),
    /// Scale and shift a stored kernel.
    Transform(KernelTransformArgs),
}

#[derive(Debug, Args)]
pub struct KernelFitArgs {
    /// gaussian, box, tent, disk or dog.
    #[arg(long)]
    pub target: String,
    /// Shape parameter (standard deviation, side, half-width or radius).
    #[arg(long)]
    pub param: f64,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long)]
    pub order: usize,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KernelTransformArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// One scale for every axis, or one per axis separated by commas.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub scale: Vec<f64>,
    /// Per-axis shift, comma separated (default zero).
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub shift: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum FieldCommand {
    /// Train an order-n integral field on a sampled signal.
    Train(FieldTrainArgs),
}

#[derive(Debug, Args)]
pub struct FieldTrainArgs {
    /// Image (.png, .pfm), audio (.wav), time series (.csv) or frame directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    /// Number of leading axes the kernel acts on (default: all).
    #[arg(long)]
    pub kernel_dims: Option<usize>,
    #[arg(long)]
    pub w1: Option<f64>,
    #[arg(long)]
    pub w2: Option<f64>,
    /// First-phase iterations; the fine-tuning phase runs a fifth of that.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ConvCommand {
    /// Sparse convolution of a trained field with a Dirac kernel.
    Apply(ConvApplyArgs),
    /// Monte Carlo convolution of a sampled signal with an analytic kernel.
    Reference(ConvReferenceArgs),
}

#[derive(Debug, Args)]
pub struct ConvApplyArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub kernel: PathBuf,
    /// Single-channel image driving a per-pixel kernel scale.
    #[arg(long)]
    pub scale_map: Option<PathBuf>,
    /// `smin:smax`, the scale range the map is stretched onto.
    #[arg(long)]
    pub scale_range: Option<String>,
    /// Original signal, enabling the Monte Carlo fallback for tiny kernels.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `W`, `WxH` or `WxHxT`.
    #[arg(long)]
    pub res: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample rate for `.wav` output.
    #[arg(long, default_value_t = 44_100)]
    pub sample_rate: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvReferenceArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// `name:param[:dims]`, e.g. `gaussian:0.07`. Dims default to the signal's.
    #[arg(long)]
    pub kernel_analytic: String,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `stratified` or `uniform`.
    #[arg(long, default_value = "stratified")]
    pub sampling: String,
    /// Output resolution (default: the input's).
    #[arg(long)]
    pub res: Option<String>,
    #[arg(long, default_value_t = 44_100)]
    pub sample_rate: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// MSE and PSNR of `a` against the reference `b`.
    Compare(EvalCompareArgs),
}

#[derive(Debug, Args)]
pub struct EvalCompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Any of mse, psnr, peak.
    #[arg(long, value_delimiter = ',', default_value = "mse,psnr")]
    pub metrics: Vec<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Sparse convolution against Monte Carlo with as many samples as Diracs.
    EqualEffort(EqualEffortArgs),
}

#[derive(Debug, Args)]
pub struct EqualEffortArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub kernel: PathBuf,
    /// The sampled signal the field was trained on.
    #[arg(long)]
    pub input: PathBuf,
    /// Analytic kernel the Dirac kernel approximates, `name:param[:dims]`.
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub res: Option<String>,
    #[arg(long)]
    pub reference_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub json: bool,
    /// Directory receiving sparse, Monte Carlo and reference images.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("NFCONV_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::invalid(format!(
            "NFCONV_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::invalid(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = Log::new(cli.verbose);
    let result = configure_threads()
        .and_then(|()| config::Config::load(cli.config.as_deref()))
        .and_then(|cfg| commands::run(&cli.command, &cfg, &log));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log.error(&e);
            eprintln!("nfconv: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
