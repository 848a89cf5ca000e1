use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "covgraph", version, about = "Covariance graph model estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit a covariance matrix under a graph.
    Fit(FitArgs),
    /// Evaluate the log-likelihood and deviance of a given matrix.
    Loglik(LoglikArgs),
    /// Fit several methods and report log-likelihood differences.
    Compare(CompareArgs),
    /// Run a Monte-Carlo comparison of the estimators.
    Simulate(SimulateArgs),
}

#[derive(Args)]
pub struct InputArgs {
    /// Graph file (`vertex`/`edge` lines).
    #[arg(long)]
    pub graph: PathBuf,
    /// Delimited observations, one row per observation.
    #[arg(long, conflicts_with = "stats", required_unless_present = "stats")]
    pub data: Option<PathBuf>,
    /// Summary statistics file (n, sd, lower-triangular correlations).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Field delimiter of the data file.
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// The data file has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Use n - 1 in place of n in log-likelihoods and deviances.
    #[arg(long)]
    pub n_adjust: bool,
}

#[derive(Args)]
pub struct SolverArgs {
    /// Convergence tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Maximum number of iterations.
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Estimation method.
    #[arg(long, default_value = "ml-icf")]
    pub method: String,
    /// Complete-set family for ml-icf-multi, one comma-separated set per line;
    /// the cliques when omitted.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Starting matrix for the iterative methods.
    #[arg(long)]
    pub start: Option<PathBuf>,
    /// Write the log-likelihood after each iteration to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Round the printed matrix to this many decimals.
    #[arg(long)]
    pub digits: Option<usize>,
    /// Write the estimate here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct LoglikArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Covariance matrix to evaluate.
    #[arg(long)]
    pub sigma: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated methods; the first is the reference.
    #[arg(long, value_delimiter = ',', default_value = "ml-icf,dual,el")]
    pub methods: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Dist {
    Gaussian,
    T,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Graph file.
    #[arg(long)]
    pub graph: PathBuf,
    /// True dispersion matrix.
    #[arg(long)]
    pub sigma: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub dist: Dist,
    /// Degrees of freedom of the t distribution.
    #[arg(long, default_value_t = 5.0)]
    pub df: f64,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub n: Vec<usize>,
    /// Replications per sample size.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "ml-icf,ml-icf-multi,ml-anderson,dual,el")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
