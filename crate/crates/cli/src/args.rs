use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ipp_core::intensity::{EstimatorConfig, KernelShape};
use ipp_core::simulate::{BbmParams, CosineParams};
use ipp_core::subspace::SvdMethod;
use serde::{Deserialize, Serialize};

/// Continuous-time node trajectories for dynamic networks.
#[derive(Debug, Parser)]
#[command(name = "ipp", version)]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "IPP_THREADS")]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Simulate events from a reference model.
    Simulate(SimulateArgs),
    /// Fit the projection subspace.
    Fit(FitArgs),
    /// Export node trajectories.
    Project(ProjectArgs),
    /// Positions of every node at one time.
    Snapshot(SnapshotArgs),
    /// Dynamic PCA of trajectory CSV.
    Reduce(ReduceArgs),
    /// Discrete-time comparison embeddings.
    Baseline(BaselineArgs),
    /// Evaluation reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Spectrum and dataset summary.
    Info(InfoArgs),
    /// Re-execute a run from its saved config.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bbm,
    Cosine,
}

/// Parameters of the simulation models; unset values take the reference settings.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of nodes.
    #[arg(long)]
    pub n: Option<usize>,
    /// Time horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Block model base rate.
    #[arg(long)]
    pub eta0: Option<f64>,
    /// Block model merge/split rate.
    #[arg(long)]
    pub eta1: Option<f64>,
    /// Block model merge time.
    #[arg(long)]
    pub s1: Option<f64>,
    /// Block model split time.
    #[arg(long)]
    pub s2: Option<f64>,
    /// Cosine model amplitude.
    #[arg(long)]
    pub scale: Option<f64>,
}

impl ModelParams {
    pub fn bbm(&self) -> BbmParams {
        let r = BbmParams::reference();
        BbmParams::halves(
            self.n.unwrap_or(r.communities.len()),
            self.eta0.unwrap_or(r.eta0),
            self.eta1.unwrap_or(r.eta1),
            self.s1.unwrap_or(r.s1),
            self.s2.unwrap_or(r.s2),
            self.horizon.unwrap_or(r.horizon),
        )
    }

    pub fn cosine(&self) -> CosineParams {
        let r = CosineParams::reference();
        CosineParams {
            n: self.n.unwrap_or(r.n),
            scale: self.scale.unwrap_or(r.scale),
            horizon: self.horizon.unwrap_or(r.horizon),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub model: ModelKind,
    #[command(flatten)]
    pub params: ModelParams,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Event CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EventArgs {
    /// Event CSV with header `src,dst,time`.
    #[arg(long)]
    pub events: PathBuf,
    /// Observation horizon; defaults to the last event time.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Node count; defaults to the largest id.
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Histogram,
    Epanechnikov,
    Box,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value_t = EstimatorKind::Histogram)]
    pub estimator: EstimatorKind,
    /// Histogram bin count.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Kernel bandwidth.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Disable the kernel boundary correction.
    #[arg(long)]
    pub no_boundary_correction: bool,
}

impl EstimatorArgs {
    pub fn config(&self) -> anyhow::Result<EstimatorConfig> {
        let kernel = |shape| -> anyhow::Result<EstimatorConfig> {
            let bandwidth = self
                .bandwidth
                .ok_or_else(|| anyhow::anyhow!("--bandwidth is required for kernel estimators"))?;
            Ok(EstimatorConfig::Kernel {
                kernel: shape,
                bandwidth,
                boundary_correction: !self.no_boundary_correction,
            })
        };
        let cfg = match self.estimator {
            EstimatorKind::Histogram => EstimatorConfig::histogram(self.bins),
            EstimatorKind::Epanechnikov => kernel(KernelShape::Epanechnikov)?,
            EstimatorKind::Box => kernel(KernelShape::Box)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvdKind {
    Lanczos,
    Dense,
}

impl From<SvdKind> for SvdMethod {
    fn from(k: SvdKind) -> Self {
        match k {
            SvdKind::Lanczos => SvdMethod::Lanczos,
            SvdKind::Dense => SvdMethod::Dense,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: EventArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: usize,
    /// Number of time slices in the unfolded matrix.
    #[arg(long, default_value_t = 20)]
    pub slices: usize,
    #[arg(long, value_enum, default_value_t = SvdKind::Lanczos)]
    pub svd: SvdKind,
    /// Start vector seed for the iterative SVD.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TimeArgs {
    /// Explicit query times (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Number of equally spaced times when `--times` is not given.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Event CSV the model was fitted on.
    #[arg(long)]
    pub events: PathBuf,
    /// Node labels to export; all nodes when omitted.
    #[arg(long = "node")]
    pub nodes: Vec<String>,
    #[command(flatten)]
    pub times: TimeArgs,
    /// Allow kernel models to answer up to one bandwidth past the horizon.
    #[arg(long)]
    pub extend: bool,
    /// Rescale every position to unit norm.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SnapshotArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub at: f64,
    #[arg(long)]
    pub extend: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReduceArgs {
    /// Trajectory CSV (`node,time,x1..xd`).
    #[arg(long)]
    pub input: PathBuf,
    /// Output dimension.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Rescale positions to unit norm before reducing.
    #[arg(long)]
    pub normalize: bool,
    /// Also write a two-dimensional dynamic PCA layout for initializing t-SNE.
    #[arg(long)]
    pub export_init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Aligned,
    Averaged,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BaselineArgs {
    #[arg(value_enum)]
    pub method: BaselineKind,
    #[command(flatten)]
    pub input: EventArgs,
    /// Number of equal windows.
    #[arg(long, default_value_t = 20)]
    pub windows: usize,
    #[arg(long)]
    pub dim: usize,
    #[command(flatten)]
    pub times: TimeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Report file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "kebab-case")]
pub enum EvalCommand {
    /// Reconstruction error of the fitted basis against random frames.
    Lemma1(Lemma1Args),
    /// Aligned trajectory error against the population truth.
    TheoremMetric(TheoremArgs),
    /// Structural and temporal coherence scores.
    Coherence(CoherenceArgs),
    /// Bias, variance and total error over bin counts.
    BiasVariance(BiasVarianceArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Lemma1Args {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    /// Number of random orthonormal frames.
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PopulationArgs {
    /// Population model the events were drawn from.
    #[arg(long, value_enum)]
    pub population: ModelKind,
    #[command(flatten)]
    pub params: ModelParams,
    /// Quadrature points for population quantities.
    #[arg(long, default_value_t = 512)]
    pub quad_points: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TheoremArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[command(flatten)]
    pub population: PopulationArgs,
    /// Evaluation grid size.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceMethod {
    Ipp,
    Aligned,
    Averaged,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CoherenceArgs {
    #[arg(long, value_enum, default_value_t = CoherenceMethod::Ipp)]
    pub method: CoherenceMethod,
    #[arg(long)]
    pub events: PathBuf,
    /// Fitted model, required for `--method ipp`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub population: PopulationArgs,
    /// Windows for the baselines and the default time grid.
    #[arg(long, default_value_t = 20)]
    pub windows: usize,
    /// Embedding dimension for the baselines.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Times at which population-identical node pairs are compared; defaults to the first two window midpoints.
    #[arg(long, value_delimiter = ',')]
    pub structural_times: Vec<f64>,
    /// Grid searched for population-identical time pairs; defaults to the window midpoints.
    #[arg(long, value_delimiter = ',')]
    pub temporal_times: Vec<f64>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BiasVarianceArgs {
    #[command(flatten)]
    pub population: PopulationArgs,
    /// Bin counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "5,20,200")]
    pub bins: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Simulation seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 500)]
    pub eval_points: usize,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InfoArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Also summarize this event file.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Number of singular values to list (at most those stored).
    #[arg(long)]
    pub top: Option<usize>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// A `*.config.json` written by an earlier run.
    #[arg(long)]
    pub config: PathBuf,
}
