use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "ers", version, about = "Minimum-area reachable tubes from recorded trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the minimum-area tube of a trajectory file at one or more α
    Fit(FitArgs),
    /// Time the exact solver against leave-k-out enumeration
    Bench(BenchArgs),
    /// Sample a known distribution and compare ERS intervals with its quantiles
    Distcheck(DistcheckArgs),
    /// Solve down an α grid, independently and/or with nested pools
    Sweep(SweepArgs),
    /// Generate synthetic lane-keeping / lane-changing logs
    Simulate(SimulateArgs),
    /// Train or apply the max-margin mode classifier on a feature file
    Classify(ClassifyArgs),
    /// Run the synthetic pipeline and report accuracy, precision and errors
    Metrics(MetricsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Bench(_) => "bench",
            Command::Distcheck(_) => "distcheck",
            Command::Sweep(_) => "sweep",
            Command::Simulate(_) => "simulate",
            Command::Classify(_) => "classify",
            Command::Metrics(_) => "metrics",
        }
    }
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct Common {
    /// JSON file of option values; flags override it
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory [default: ers-out]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Solver worker threads; ERS_WORKERS overrides the config file [default: all cores]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Per-solve wall-clock limit in seconds [default: 600]
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Per-solve branch-and-bound node limit
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Also write wall times and node counts (these differ between runs)
    #[arg(long)]
    pub timing: bool,
    /// Table format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Descending α grid: an explicit list, or start/stop/step.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GridOpts {
    /// Explicit comma-separated α values, strictly decreasing
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// First α of the grid [default: 1.0]
    #[arg(long)]
    pub start: Option<f64>,
    /// Last α of the grid (inclusive)
    #[arg(long)]
    pub stop: Option<f64>,
    /// Grid spacing
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DistKind {
    Uniform,
    Normal,
    Lognormal,
    ExtremeValue,
}

/// A known distribution to sample.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DistOpts {
    /// Distribution family [default: normal]
    #[arg(long, value_enum)]
    pub kind: Option<DistKind>,
    /// Two family parameters: low,high | mean,std_dev | mu,sigma | location,scale [default: 0,1]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    /// Number of samples [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Sampler seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time steps after the first; 0 gives point samples [default: 0]
    #[arg(long)]
    pub horizon: Option<usize>,
}

/// Scenario grid for the synthetic generator.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOpts {
    /// JSON file with `base` scenario parameters and `variations` lists [default: built-in 400-scenario grid]
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Steps after the first [default: 50]
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Time step in seconds [default: 0.1]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Base seed; scenario seeds derive from it [default: taken from the grid file, else 2024]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    Milp,
    Naive,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FitArgs {
    /// Trajectory CSV with columns id,t,<channels...>
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Retained fraction(s), comma-separated [default: 1.0]
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Channels to bound [default: x,y when present, else every channel]
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    /// Per-channel area weights [default: 1 each]
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Time step in seconds [default: 1.0]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Mode-label CSV (id,mode); requires --mode
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Keep only trajectories with this mode label
    #[arg(long)]
    pub mode: Option<String>,
    /// Leave positions as recorded instead of starting every trajectory at the origin
    #[arg(long)]
    pub no_center: bool,
    /// Rotate each trajectory so its initial heading is along +x (needs --heading)
    #[arg(long)]
    pub rotate: bool,
    /// Heading channel in radians, used by --rotate
    #[arg(long)]
    pub heading: Option<String>,
    /// Solution method [default: exact]
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchArgs {
    /// Trajectory counts [default: 100,500]
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Rejection counts [default: 1,2,3,4,5,10]
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Seed of the synthetic lane-keeping data [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps after the first [default: 50]
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Wall-clock cap on each enumeration in seconds; 0 skips it [default: 600]
    #[arg(long)]
    pub naive_limit: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DistcheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dist: DistOpts,
    /// Independent trials; trial i uses seed + i [default: 1]
    #[arg(long)]
    pub trials: Option<usize>,
    /// α values for the interval comparison [default: 0.6827,0.9545]
    #[arg(long, value_delimiter = ',')]
    pub sigma_alphas: Option<Vec<f64>>,
    /// Plateau threshold for the typical-set rule [default: 0.2]
    #[arg(long)]
    pub slope_fraction: Option<f64>,
    /// Nested-pool sweep instead of independent solves
    #[arg(long)]
    pub accelerated: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepArgs {
    /// Trajectory CSV; without it, samples from the distribution options
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Channels to bound when reading --input
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    /// Time step of --input in seconds [default: 1.0]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Run the nested-pool sweep
    #[arg(long)]
    pub accelerated: bool,
    /// Also run independent solves (the default when --accelerated is absent)
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub dist: DistOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyArgs {
    /// Feature CSV written by `simulate`
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Apply this hyperplane JSON instead of training
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Soft-margin penalty C [default: 1.0]
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Relative duality-gap tolerance [default: 0.001]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Held-out fraction of trajectories [default: 0.25]
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Seed of the train/holdout split [default: 7]
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioOpts,
    /// Soft-margin penalty C [default: 1.0]
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Relative duality-gap tolerance [default: 0.001]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Held-out fraction of scenarios [default: 0.25]
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Seed of the train/holdout split [default: 7]
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridOpts,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}
