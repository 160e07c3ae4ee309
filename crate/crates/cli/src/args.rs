use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pnp-gmm", version, about = "Plug-and-play ADMM restoration with GMM patch priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON spec to start from; explicit flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub spec: Option<PathBuf>,

    /// Print the resolved spec as JSON and exit without running.
    #[arg(long, global = true)]
    pub print_spec: bool,

    /// Suppress progress output.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// Maximum number of worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a GMM patch prior to a directory of clean images.
    TrainGmm(TrainArgs),
    /// Blur an image with a catalog or file kernel and add seeded noise.
    Degrade(DegradeArgs),
    /// Simulate and restore a blurred image.
    Deblur(DeblurArgs),
    /// Simulate compressive measurements and reconstruct.
    Csrecon(CsArgs),
    /// Denoise an image with a trained prior.
    Denoise(DenoiseArgs),
    /// Compute one quality metric.
    Eval(EvalArgs),
    /// Compressive reconstruction for several measurement counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DcArg {
    SubtractMean,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct PatchArgs {
    /// Patch side length.
    #[arg(long, value_name = "N")]
    pub patch: Option<usize>,
    /// Patch grid stride used when denoising.
    #[arg(long, value_name = "N")]
    pub stride: Option<usize>,
    #[arg(long, value_enum)]
    pub dc: Option<DcArg>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Directory of clean training images.
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "K")]
    pub components: Option<usize>,
    /// Grid stride of the training patches.
    #[arg(long, value_name = "N")]
    pub training_stride: Option<usize>,
    /// Keep a seeded random subset of at most this many training patches.
    #[arg(long, value_name = "N")]
    pub max_patches: Option<usize>,
    #[arg(long, value_name = "N")]
    pub em_iters: Option<usize>,
    /// Crop applied to corpus images, `WxH` or `WxH:center`.
    #[arg(long, value_name = "WxH[:ANCHOR]")]
    pub corpus_crop: Option<String>,
    #[arg(long, value_name = "WxH")]
    pub corpus_resize: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub patch: PatchArgs,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ImageArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Crop applied to the input, `WxH` (top-left) or `WxH:center`.
    #[arg(long, value_name = "WxH[:ANCHOR]")]
    pub crop: Option<String>,
    #[arg(long, value_name = "WxH")]
    pub resize: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    #[arg(long, value_name = "VAR", conflicts_with = "bsnr")]
    pub noise_variance: Option<f64>,
    /// Target blurred-signal-to-noise ratio in dB.
    #[arg(long, value_name = "DB")]
    pub bsnr: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DegradeArgs {
    #[command(flatten)]
    pub image: ImageArgs,
    /// Catalog kernel id (1 to 6).
    #[arg(long, value_name = "ID", conflicts_with = "kernel_file")]
    pub kernel: Option<u8>,
    #[arg(long, value_name = "FILE")]
    pub kernel_file: Option<PathBuf>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[command(flatten)]
    pub image: ImageArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub patch: PatchArgs,
    /// Pretrained model; skips training on the corpus.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Denoiser variance is `beta / mu`.
    #[arg(long, conflicts_with = "denoiser_variance")]
    pub beta: Option<f64>,
    /// Fixed denoiser variance.
    #[arg(long, value_name = "VAR")]
    pub denoiser_variance: Option<f64>,
    #[arg(long, value_name = "N")]
    pub iters: Option<usize>,
    /// Comma-separated refit points, or `none`.
    #[arg(long, value_name = "LIST")]
    pub retrain: Option<String>,
    #[arg(long, value_name = "N")]
    pub retrain_stride: Option<usize>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Master seed; every random stream is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the restored image, trace and report.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DeblurArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Catalog kernel id (1 to 6).
    #[arg(long, value_name = "ID")]
    pub kernel: Option<u8>,
}

#[derive(Debug, Clone, Args)]
pub struct CsArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_name = "M")]
    pub measurements: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated measurement counts.
    #[arg(long, value_name = "LIST")]
    pub m_values: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DenoiseArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "VAR")]
    pub noise_variance: Option<f64>,
    #[command(flatten)]
    pub patch: PatchArgs,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Psnr,
    Isnr,
    Nmse,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub clean: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub degraded: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub restored: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
}
