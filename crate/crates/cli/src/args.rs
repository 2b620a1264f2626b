use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nugget_core::CenterMode;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "nugget", version, about = "Reduce large datasets to weighted data nuggets and analyse them")]
pub struct Cli {
    /// Worker threads. `NUGGET_THREADS` takes precedence; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Where to write the run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Build data nuggets from a CSV matrix.
    Create(CreateArgs),
    /// Split high-variance nuggets.
    Refine(RefineArgs),
    /// Weighted K-means on nugget centers.
    Cluster(ClusterArgs),
    /// Omega curve over a range of K and the second-difference choice.
    ChooseK(ChooseKArgs),
    /// Weighted principal components of nugget centers.
    Pca(PcaArgs),
    /// Regression quantiles from one-dimensional nuggets.
    Quantiles(QuantilesArgs),
    /// Weighted 2-D histogram.
    Density(DensityArgs),
    /// Write one of the simulated datasets.
    Simulate(SimulateArgs),
    /// Split the sample covariance into between- and within-nugget parts.
    Decompose(DecomposeArgs),
    /// Time nugget creation over increasing N.
    Bench(BenchArgs),
    /// Run a pipeline described by a `key = value` config file.
    Run(RunArgs),
    /// Replay the command recorded in a manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Create(_) => "create",
            Command::Refine(_) => "refine",
            Command::Cluster(_) => "cluster",
            Command::ChooseK(_) => "choose-k",
            Command::Pca(_) => "pca",
            Command::Quantiles(_) => "quantiles",
            Command::Density(_) => "density",
            Command::Simulate(_) => "simulate",
            Command::Decompose(_) => "decompose",
            Command::Bench(_) => "bench",
            Command::Run(_) => "run",
            Command::Rerun(_) => "rerun",
        }
    }
}

fn center_mode(s: &str) -> Result<CenterMode, String> {
    s.parse().map_err(|e: nugget_core::NuggetError| e.to_string())
}

/// Input matrix options shared by commands that read raw rows.
#[derive(Args, Debug, Serialize)]
pub struct InputArgs {
    /// Numeric CSV, one row per observation; a header row is optional.
    #[arg(long)]
    pub input: PathBuf,

    /// Center and scale every column to unit variance before use.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct CreateArgs {
    #[command(flatten)]
    pub data: InputArgs,
    /// Subset size.
    #[arg(long = "R")]
    pub r: Option<usize>,
    /// Deletion rate per round.
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// Intermediate center count.
    #[arg(long = "m-init")]
    pub m_init: Option<usize>,
    /// Final nugget count.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// `mean` or `random`.
    #[arg(long, default_value = "mean", value_parser = center_mode)]
    pub center: CenterMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Nugget CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Row-to-nugget CSV.
    #[arg(long)]
    pub assignment: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct RefineArgs {
    #[command(flatten)]
    pub data: InputArgs,
    #[arg(long)]
    pub nuggets: PathBuf,
    #[arg(long)]
    pub assignment: PathBuf,
    /// Quantile of the nugget scales above which nuggets are split.
    #[arg(long, default_value_t = 0.5)]
    pub nu: f64,
    #[arg(long = "n-min", default_value_t = 2)]
    pub n_min: usize,
    #[arg(long = "max-rounds", default_value_t = 50)]
    pub max_rounds: usize,
    /// How the input nuggets' centers were chosen.
    #[arg(long, default_value = "mean", value_parser = center_mode)]
    pub center: CenterMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    /// Row-to-nugget CSV for the refined set.
    #[arg(long = "assignment-out")]
    pub assignment_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub nuggets: PathBuf,
    #[arg(long = "K")]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long = "max-sweeps", default_value_t = 100)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `nugget_id, cluster_id` CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// JSON summary; printed to stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ChooseKArgs {
    #[arg(long)]
    pub nuggets: PathBuf,
    #[arg(long = "k-min")]
    pub k_min: usize,
    #[arg(long = "k-max")]
    pub k_max: usize,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `k, wwcss, second_difference` CSV.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PcaArgs {
    #[arg(long)]
    pub nuggets: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    /// Per-nugget scores CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Loadings CSV, one row per variable.
    #[arg(long)]
    pub loadings: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct QuantilesArgs {
    #[arg(long)]
    pub nuggets: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.95,0.96,0.97,0.98,0.99")]
    pub percentiles: Vec<f64>,
    /// `global`, or `tail:<p>` to fit only nuggets at cumulative proportion `p` and above.
    #[arg(long, default_value = "global")]
    pub fit: String,
    /// CSV of estimates; printed to stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DensityArgs {
    /// Points CSV.
    #[arg(long, conflicts_with = "nuggets", required_unless_present = "nuggets")]
    pub input: Option<PathBuf>,
    /// One weight per point; unit weights when omitted.
    #[arg(long, requires = "input")]
    pub weights: Option<PathBuf>,
    /// Use nugget centers and weights as the points.
    #[arg(long)]
    pub nuggets: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Column indices for the two axes.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub columns: Vec<usize>,
    /// `x_lo,x_hi,y_lo,y_hi`; the bounding box of the points when omitted.
    #[arg(long, value_delimiter = ',')]
    pub range: Option<Vec<f64>>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Smile,
    Binary,
    Gaussian4,
    Largep,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub which: Which,
    /// Fraction of the full-size dataset to generate.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Condition probability for `binary`.
    #[arg(long, default_value_t = 0.8)]
    pub p: f64,
    /// Total dimension for `largep`.
    #[arg(long, default_value_t = 200)]
    pub dims: usize,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub data: InputArgs,
    #[arg(long)]
    pub nuggets: PathBuf,
    #[arg(long)]
    pub assignment: PathBuf,
    #[arg(long, default_value = "mean", value_parser = center_mode)]
    pub center: CenterMode,
    /// JSON report.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Ascending row counts.
    #[arg(long = "n", value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long = "M", default_value_t = 200)]
    pub m: usize,
    /// Columns of the Gaussian benchmark data.
    #[arg(long, default_value_t = 4)]
    pub p: usize,
    #[arg(long = "R")]
    pub r: Option<usize>,
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// Defaults to `min(10000, smallest N)` so it stays fixed across N.
    #[arg(long = "m-init")]
    pub m_init: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}
