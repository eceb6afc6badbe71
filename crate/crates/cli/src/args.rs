use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Diffusion-model sampling, training and error analysis on analytic
/// denoisers and toy networks.
#[derive(Parser, Debug)]
#[command(name = "edm", version, propagate_version = true)]
pub struct Cli {
    /// Seed for every random draw
    #[arg(long, global = true, env = "EDM_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (0 = machine parallelism). Never changes results
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// key=value file of flag defaults; command-line flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Write a key,value run report with the fully resolved configuration
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the time discretization t_i, σ_i of a framework
    Steps(StepsArgs),
    /// Generate samples from latents
    Sample(SampleArgs),
    /// Map data to latents by integrating the ODE towards high noise
    Encode(EncodeArgs),
    /// Train a small MLP denoiser
    Train(TrainArgs),
    /// Per-σ expected training loss of a denoiser
    LossProfile(LossProfileArgs),
    /// Apply random geometric augmentations to an image dataset
    Augment(AugmentArgs),
    /// Local truncation error of one solver step at every noise level
    TruncationScan(ScanArgs),
    /// Global convergence order of a deterministic solver
    Order(OrderArgs),
    /// Encode/decode round-trip error against N
    Roundtrip(RoundtripArgs),
    /// Degradation under repeated fixed-σ churn
    Churn(ChurnArgs),
    /// Write a built-in dataset (two-point, gaussian:<σ_data>, grid2d[:k])
    MakeDataset(MakeDatasetArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FrameworkArg {
    Vp,
    Ve,
    Iddpm,
    Edm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanKind {
    /// The framework's own discretization
    Native,
    /// Polynomial warp with exponent ρ mapped through the framework's schedule
    Rho,
}

#[derive(Args, Debug, Clone)]
pub struct PlanArgs {
    /// Schedule, scaling and preconditioning preset
    #[arg(long, value_enum, default_value_t = FrameworkArg::Edm)]
    pub framework: FrameworkArg,

    #[arg(long, value_enum, default_value_t = PlanKind::Native)]
    pub plan: PlanKind,

    /// Number of steps N
    #[arg(long, default_value_t = 18)]
    pub n: usize,

    /// Lowest positive noise level [preset: edm 0.002, ve 0.02, vp σ(ε_s) ≈ 0.001, iddpm 0.0064]
    #[arg(long)]
    pub sigma_min: Option<f64>,

    /// Highest noise level [preset: edm 80, ve 80 (training 100), vp σ(1) ≈ 152, iddpm 80]
    #[arg(long)]
    pub sigma_max: Option<f64>,

    /// Warp exponent ρ [preset: 7]
    #[arg(long)]
    pub rho: Option<f64>,

    /// VP β_d [preset: 19.9]
    #[arg(long)]
    pub beta_d: Option<f64>,

    /// VP β_min [preset: 0.1]
    #[arg(long)]
    pub beta_min: Option<f64>,

    /// VP sampling end time ε_s [preset: 1e-3]
    #[arg(long)]
    pub eps_s: Option<f64>,

    /// iDDPM table size M [preset: 1000]
    #[arg(long)]
    pub m: Option<usize>,

    /// iDDPM first index j_0 [preset: 8]
    #[arg(long)]
    pub j0: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct DenoiserArgs {
    /// analytic:<dataset>, gaussian:<σ_data>, or mlp:<weights.edmw>
    #[arg(long)]
    pub denoiser: String,

    /// σ_data for network preconditioning
    #[arg(long, default_value_t = 0.5)]
    pub sigma_data: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Euler,
    Heun,
    Rk2,
    Stochastic,
    Em,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ChurnPreset {
    /// S_churn 30, S_tmin 0.01, S_tmax 1, S_noise 1.007
    Cifar10Vp,
    /// S_churn 80, S_tmin 0.05, S_tmax 1, S_noise 1.007
    Cifar10Ve,
    /// S_churn 80, S_tmin 0.05, S_tmax 50, S_noise 1.003
    ImagenetPretrained,
    /// S_churn 40, S_tmin 0.05, S_tmax 50, S_noise 1.003
    ImagenetRetrained,
}

#[derive(Args, Debug, Clone)]
pub struct SamplerArgs {
    #[arg(long, value_enum, default_value_t = SamplerArg::Heun)]
    pub sampler: SamplerArg,

    /// RK2 evaluation point α in (0, 1.2]: 1 = Heun, 0.5 = midpoint, 2/3 = Ralston
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,

    /// Starting values for the churn parameters; S_* flags override it
    #[arg(long, value_enum)]
    pub churn_preset: Option<ChurnPreset>,

    /// Churn amount S_churn [default: 0, or the preset]
    #[arg(long)]
    pub s_churn: Option<f64>,

    /// Lowest σ that receives churn [default: 0, or the preset]
    #[arg(long)]
    pub s_tmin: Option<f64>,

    /// Highest σ that receives churn [default: inf, or the preset]
    #[arg(long)]
    pub s_tmax: Option<f64>,

    /// Noise inflation S_noise [default: 1, or the preset]
    #[arg(long)]
    pub s_noise: Option<f64>,

    /// Langevin rate for em: sigma-ratio (σ̇/σ) or a constant ≥ 0
    #[arg(long, default_value = "sigma-ratio")]
    pub beta: String,
}

#[derive(Args, Debug)]
pub struct StepsArgs {
    #[command(flatten)]
    pub plan: PlanArgs,

    /// Output CSV (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub plan: PlanArgs,

    #[command(flatten)]
    pub denoiser: DenoiserArgs,

    #[command(flatten)]
    pub sampler: SamplerArgs,

    /// Number of trajectories; trajectory i uses random stream i
    #[arg(long, default_value_t = 16)]
    pub count: usize,

    /// Sample dimension for gaussian:<σ_data> denoisers
    #[arg(long, default_value_t = 1)]
    pub dim: usize,

    /// Samples as .edmd dataset, or CSV for any other extension (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// CSV of every intermediate state x_i
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub plan: PlanArgs,

    #[command(flatten)]
    pub denoiser: DenoiserArgs,

    /// Data to encode: a dataset file or built-in name
    #[arg(long)]
    pub input: String,

    /// Latents as .edmd dataset, or CSV for any other extension (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training data: a dataset file or built-in name
    #[arg(long)]
    pub data: String,

    /// Preconditioning and noise-level distribution
    #[arg(long, value_enum, default_value_t = FrameworkArg::Edm)]
    pub framework: FrameworkArg,

    /// Hidden layer widths
    #[arg(long, value_delimiter = ',', default_value = "32,32")]
    pub hidden: Vec<usize>,

    #[arg(long, default_value_t = 5000)]
    pub steps: usize,

    #[arg(long, default_value_t = 128)]
    pub batch: usize,

    /// SGD learning rate
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,

    /// Mean of ln σ under p_train
    #[arg(long, default_value_t = -1.2, allow_negative_numbers = true)]
    pub p_mean: f64,

    /// Std of ln σ under p_train
    #[arg(long, default_value_t = 1.2)]
    pub p_std: f64,

    /// σ_data
    #[arg(long, default_value_t = 0.5)]
    pub sigma_data: f64,

    /// Steps per loss record
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,

    /// Enable geometric augmentation (image datasets; adds 9 conditioning inputs)
    #[arg(long)]
    pub augment: bool,

    #[command(flatten)]
    pub constants: AugmentConstantArgs,

    /// Weights file (.edmw)
    #[arg(long)]
    pub out: PathBuf,

    /// Loss-record CSV
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct AugmentConstantArgs {
    /// Probability of each augmentation other than x-flip
    #[arg(long, default_value_t = 0.12)]
    pub a_prob: f64,

    /// Scale base A_scale
    #[arg(long, default_value_t = 2f64.powf(0.2))]
    pub a_scale: f64,

    /// Anisotropy base A_aniso
    #[arg(long, default_value_t = 2f64.powf(0.2))]
    pub a_aniso: f64,

    /// Translation scale A_trans
    #[arg(long, default_value_t = 0.125)]
    pub a_trans: f64,
}

#[derive(Args, Debug)]
pub struct LossProfileArgs {
    #[command(flatten)]
    pub denoiser: DenoiserArgs,

    /// Preconditioning preset of the denoiser (and of λ(σ))
    #[arg(long, value_enum, default_value_t = FrameworkArg::Edm)]
    pub framework: FrameworkArg,

    /// Data the noisy inputs are built from: a dataset file or built-in name
    #[arg(long)]
    pub data: String,

    /// Noise levels; overrides the log-spaced grid
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Vec<f64>,

    /// Log-spaced grid: lowest σ
    #[arg(long, default_value_t = 0.002)]
    pub grid_min: f64,

    /// Log-spaced grid: highest σ
    #[arg(long, default_value_t = 80.0)]
    pub grid_max: f64,

    /// Log-spaced grid: number of points
    #[arg(long, default_value_t = 25)]
    pub grid_points: usize,

    /// Monte-Carlo draws per σ
    #[arg(long, default_value_t = 4096)]
    pub draws: usize,

    /// CSV output (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// H x W x C image dataset: a dataset file
    #[arg(long)]
    pub data: String,

    #[command(flatten)]
    pub constants: AugmentConstantArgs,

    /// Augmented dataset (.edmd)
    #[arg(long)]
    pub out: PathBuf,

    /// CSV of the 9-D conditioning labels
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Euler,
    Heun,
    Rk2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TruthArg {
    /// Many small Euler steps
    Fine,
    /// Exact flow; gaussian:<σ_data> denoisers only
    Gaussian,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    pub plan: PlanArgs,

    #[command(flatten)]
    pub denoiser: DenoiserArgs,

    #[arg(long, value_enum, default_value_t = SolverArg::Euler)]
    pub solver: SolverArg,

    /// RK2 evaluation point α
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,

    #[arg(long, value_enum, default_value_t = TruthArg::Fine)]
    pub truth: TruthArg,

    /// Euler substeps of the fine ground truth
    #[arg(long, default_value_t = 200)]
    pub substeps: usize,

    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    /// CSV output (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OrderArgs {
    #[command(flatten)]
    pub plan: PlanArgs,

    #[command(flatten)]
    pub denoiser: DenoiserArgs,

    #[arg(long, value_enum, default_value_t = SolverArg::Heun)]
    pub solver: SolverArg,

    /// RK2 evaluation point α
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,

    /// Step counts; the reference uses 8 × the largest
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
    pub ns: Vec<usize>,

    #[arg(long, default_value_t = 16)]
    pub trials: usize,

    /// Sample dimension for gaussian:<σ_data> denoisers
    #[arg(long, default_value_t = 1)]
    pub dim: usize,

    /// CSV output (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    #[command(flatten)]
    pub plan: PlanArgs,

    #[command(flatten)]
    pub denoiser: DenoiserArgs,

    /// Points to round-trip
    #[arg(long)]
    pub data: Option<String>,

    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512")]
    pub ns: Vec<usize>,

    /// Points per N, taken from the data in order
    #[arg(long, default_value_t = 16)]
    pub trials: usize,

    /// CSV output (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ChurnArgs {
    #[command(flatten)]
    pub denoiser: DenoiserArgs,

    /// Fixed noise level
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,

    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,

    /// Noise inflation S_noise
    #[arg(long, default_value_t = 1.0)]
    pub s_noise: f64,

    #[arg(long, default_value_t = 16)]
    pub trials: usize,

    /// Record every this many iterations
    #[arg(long, default_value_t = 100)]
    pub stride: usize,

    /// CSV output (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MakeDatasetArgs {
    /// two-point, gaussian:<σ_data>, or grid2d[:k]
    pub spec: String,

    /// Points drawn for gaussian:<σ_data>
    #[arg(long, default_value_t = 1024)]
    pub count: usize,

    /// Dimension for gaussian:<σ_data>
    #[arg(long, default_value_t = 1)]
    pub dim: usize,

    /// Dataset file (.edmd), or CSV for any other extension
    #[arg(long)]
    pub out: PathBuf,
}
