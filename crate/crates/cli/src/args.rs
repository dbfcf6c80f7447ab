use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cape", version, about = "Prevalence estimation from a survey combined with official case counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the prevalence from one survey.
    Estimate(EstimateArgs),
    /// Run Monte Carlo scenarios from a TOML config and write CSV.
    Simulate(SimulateArgs),
    /// Sweep the survey false-negative rate and write CSV.
    Sensitivity(SensitivityArgs),
    /// Reproduce the Austrian November 2020 table.
    CaseStudy(CaseStudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    /// Austria, November 2020 (n = 2287, R*1 = 71, R11 = 32).
    Austria,
}

/// Survey counts, the official proportion and the error rates.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Survey sample size.
    #[arg(long)]
    pub n: Option<u64>,
    /// Survey positives that are official cases.
    #[arg(long)]
    pub r11: Option<u64>,
    /// Survey negatives that are official cases.
    #[arg(long)]
    pub r10: Option<u64>,
    /// Survey positives that are not official cases.
    #[arg(long)]
    pub r01: Option<u64>,
    /// All survey positives (partial counts; R10 is then taken as 0).
    #[arg(long = "r-star1", conflicts_with_all = ["r10", "r01"])]
    pub r_star1: Option<u64>,
    /// Official proportion of declared cases.
    #[arg(long)]
    pub pi0: Option<f64>,
    /// Survey false-positive rate.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Survey false-negative rate.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Official false-positive rate.
    #[arg(long, default_value_t = 0.0)]
    pub alpha0: f64,
    /// Use an embedded dataset for counts and pi0 (explicit flags override it).
    #[arg(long, value_enum)]
    pub dataset: Option<Dataset>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Estimators: smle, cmle, mmle, mme, gmm, cell-mme (with --cell) or cell-mme-N.
    #[arg(long, value_delimiter = ',')]
    pub estimator: Vec<String>,
    /// Cell (1-4) used by a bare `cell-mme`.
    #[arg(long)]
    pub cell: Option<usize>,
    /// Interval methods: cp-rstar1, cp-r01, asymptotic-cmle, asymptotic-mmle.
    /// Defaults to the natural method of each selected estimator.
    #[arg(long, value_delimiter = ',')]
    pub ci: Vec<String>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Intersect intervals with the admissible range.
    #[arg(long)]
    pub clamp: bool,
    /// Prevalence at which the GMM weights are evaluated.
    #[arg(long)]
    pub pilot: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Read the request from a JSON file (a request or a previous JSON report).
    #[arg(long, conflicts_with_all = ["n", "r11", "r10", "r01", "r_star1", "pi0", "dataset"])]
    pub request: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// TOML scenario file.
    pub config: PathBuf,
    /// Worker threads; 0 runs sequentially. Defaults to all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Use 50,000 replicates for every metric.
    #[arg(long)]
    pub full_reps: bool,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of replicates.
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Write CSV here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.0)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 0.30)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 31)]
    pub steps: usize,
    /// Estimators to sweep (smle, mme, cmle, mmle).
    #[arg(long, value_delimiter = ',', default_values_t = ["smle".to_string(), "mme".to_string()])]
    pub estimator: Vec<String>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CaseStudyArgs {
    /// Survey scaling factors for the extra survey-MLE rows.
    #[arg(long, default_values_t = [1.5, 2.0])]
    pub k: Vec<f64>,
    /// Intersect asymptotic intervals with the admissible range.
    #[arg(long)]
    pub clamp: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}
