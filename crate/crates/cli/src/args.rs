use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcluster::clustering::NumClusters;
use pcluster::simulation::Dgp;
use pcluster::Method;

/// Starts per k-means problem unless overridden.
pub const DEFAULT_STARTS: usize = pcluster::kmeans::DEFAULT_STARTS;
/// Starts per k-means problem under `--paper-application`.
pub const APPLICATION_STARTS: usize = 10_000;
/// Environment variable that, when set, replaces `--seed`.
pub const SEED_ENV: &str = "PCLUSTER_SEED";

/// Two-way grouped fixed effects estimation for panel data.
#[derive(Debug, Parser)]
#[command(name = "pcluster", version, about)]
pub struct Cli {
    /// Worker threads for multistart k-means and Monte Carlo replications.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the slope coefficients of a panel stored as CSV.
    Estimate(EstimateArgs),
    /// Cluster units and periods and export the assignments.
    Cluster(ClusterArgs),
    /// Run Monte Carlo experiments on simulated panels.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Aligned text rounded to three decimals.
    Table,
    Csv,
    Json,
}

/// Options shared by every subcommand that clusters.
#[derive(Debug, Clone, Args)]
pub struct ClusteringArgs {
    /// Number of unit clusters, or `auto`.
    #[arg(long = "G", default_value = "auto")]
    pub g: NumClusters,

    /// Number of time clusters, or `auto`.
    #[arg(long = "C", default_value = "auto")]
    pub c: NumClusters,

    /// k-means starts per problem [default: 30, or 10000 with --paper-application].
    #[arg(long)]
    pub n_starts: Option<usize>,

    /// Master seed; the PCLUSTER_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Long-format CSV with header unit,time,y,x1[,x2..].
    #[arg(long, short)]
    pub input: PathBuf,

    /// Result file; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,

    #[arg(long, default_value = "baseline")]
    pub estimator: Method,

    /// Center and scale y and every regressor before estimation, then map
    /// coefficients and standard errors back to the original units.
    #[arg(long)]
    pub standardize: bool,

    /// 10000 k-means starts, and standardization for every estimator but twfe.
    #[arg(long)]
    pub paper_application: bool,

    /// Factors for the interactive estimator [default: floor(sqrt(T))].
    #[arg(long)]
    pub factors: Option<usize>,

    /// Largest factor count considered by the factor-augmented estimator.
    #[arg(long, default_value_t = pcluster::benchmarks::DEFAULT_MAX_FACTORS)]
    pub max_factors: usize,

    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,

    #[command(flatten)]
    pub clustering: ClusteringArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    /// Long-format CSV with header unit,time,y,x1[,x2..].
    #[arg(long, short)]
    pub input: PathBuf,

    /// Directory for unit_clusters.csv, time_clusters.csv and diagnostics.
    #[arg(long, short, default_value = ".")]
    pub output: PathBuf,

    /// Cluster the standardized panel.
    #[arg(long)]
    pub standardize: bool,

    /// 10000 k-means starts on the standardized panel.
    #[arg(long)]
    pub paper_application: bool,

    /// Format of the diagnostics file and of the printed summary.
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,

    #[command(flatten)]
    pub clustering: ClusteringArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Estimators to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "baseline")]
    pub estimator: Vec<Method>,

    /// Data-generating process: 1 (CES) or 2 (polynomial).
    #[arg(long, default_value = "1", value_parser = parse_dgp)]
    pub dgp: Dgp,

    /// AR coefficient of the time heterogeneity.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,

    /// AR coefficient of the idiosyncratic errors.
    #[arg(long, default_value_t = 0.0)]
    pub kappa: f64,

    /// Number of units.
    #[arg(long = "N", default_value_t = 50)]
    pub n: usize,

    /// Numbers of periods, comma separated; one experiment per value.
    #[arg(long = "T", value_delimiter = ',', default_value = "50")]
    pub t: Vec<usize>,

    /// True slope.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,

    #[arg(long, default_value_t = 500)]
    pub reps: usize,

    /// Exit with status 3 when an estimator fails in a larger share of replications.
    #[arg(long, default_value_t = 0.5)]
    pub max_failure_rate: f64,

    /// Summary file; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,

    #[command(flatten)]
    pub clustering: ClusteringArgs,
}

fn parse_dgp(s: &str) -> Result<Dgp, String> {
    s.parse::<u8>().ok().and_then(|id| Dgp::from_id(id).ok()).ok_or_else(|| format!("expected 1 or 2, got '{s}'"))
}

impl ClusteringArgs {
    pub fn starts(&self, paper_application: bool) -> usize {
        self.n_starts.unwrap_or(if paper_application { APPLICATION_STARTS } else { DEFAULT_STARTS })
    }
}
