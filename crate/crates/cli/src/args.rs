use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "rfimpute", version, about = "Random-forest imputation that can be replayed on new observations")]
pub struct Cli {
    /// Worker threads for forest training and prediction (default: all cores).
    #[arg(long, global = true, env = "RFIMPUTE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate correlated Gaussian predictors and a binary outcome.
    Simulate(SimulateArgs),
    /// Inject missing values into a complete CSV.
    Ampute(AmputeArgs),
    /// Fit the imputer; write the model, the imputed data and the error trace.
    Fit(FitArgs),
    /// Impute a CSV with a saved model.
    Impute(ImputeArgs),
    /// Score an imputation against the complete data.
    Evaluate(EvaluateArgs),
    /// Repeated split / ampute / fit / impute / evaluate runs.
    Benchmark(BenchmarkArgs),
}

fn parse_rho(s: &str) -> Result<f64, String> {
    let rho: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    rfimpute::simgen::equicorrelation_cholesky(4, rho)
        .map(|_| rho)
        .map_err(|_| format!("{rho} does not give a positive-definite 4x4 correlation matrix (need -1/3 < rho < 1)"))
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got '{s}'"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    /// Pairwise correlation of the four signal variables.
    #[arg(long, value_parser = parse_rho)]
    pub rho: f64,
    /// Target AUROC of the outcome model.
    #[arg(long, default_value_t = 0.75)]
    pub auroc: f64,
    #[arg(long, default_value_t = 0.20)]
    pub prevalence: f64,
    /// Add twelve independent noise variables N1..N12.
    #[arg(long)]
    pub noise: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MechanismArg {
    #[value(name = "MCAR")]
    Mcar,
    #[value(name = "MAR_2")]
    Mar2,
    #[value(name = "MAR_2_out")]
    Mar2Out,
    #[value(name = "MAR_circ")]
    MarCirc,
    #[value(name = "MAR_circ_out")]
    MarCircOut,
    #[value(name = "MNAR")]
    Mnar,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AmputationArgs {
    /// Missingness mechanism. Required unless --spec is given.
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismArg>,
    /// key=value amputation spec file; command-line flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Columns to ampute (default: every column except the outcome and noise columns).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Driver column for each target (MAR_2 variants need them; circular variants default to the next target).
    #[arg(long, value_delimiter = ',')]
    pub drivers: Vec<String>,
    /// Binary outcome column; never amputed.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Columns that always receive MCAR missingness.
    #[arg(long, value_delimiter = ',')]
    pub noise: Vec<String>,
    /// MCAR rate.
    #[arg(long, value_parser = parse_probability)]
    pub rate: Option<f64>,
    /// Rate below the driver mean (MAR, MNAR).
    #[arg(long, value_parser = parse_probability)]
    pub lower_rate: Option<f64>,
    /// Rate above the driver mean (MAR, MNAR).
    #[arg(long, value_parser = parse_probability)]
    pub upper_rate: Option<f64>,
    #[arg(long, value_parser = parse_probability)]
    pub noise_rate: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct AmputeArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub amputation: AmputationArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Columns to read as categorical even if numeric.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceArg {
    Oob,
    Apparent,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    MeanMode,
    MedianMode,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderArg {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImputerArgs {
    #[arg(long, default_value_t = 500)]
    pub trees: usize,
    /// Features tried per split (default: floor(sqrt(p))).
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Nodes at or below this weight are not split (default: 5 regression, 10 classification).
    #[arg(long)]
    pub min_node_size: Option<usize>,
    /// 0 = unlimited.
    #[arg(long, default_value_t = 0)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 10)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = ConvergenceArg::Oob)]
    pub convergence: ConvergenceArg,
    #[arg(long, value_enum, default_value_t = InitArg::MeanMode)]
    pub init: InitArg,
    /// Constant initialization for one column (repeatable).
    #[arg(long = "init-value", value_parser = parse_pair)]
    pub init_values: Vec<(String, String)>,
    #[arg(long, value_enum, default_value_t = OrderArg::Increasing)]
    pub order: OrderArg,
    /// Explicit imputation sequence; overrides --order.
    #[arg(long, value_delimiter = ',')]
    pub sequence: Vec<String>,
    /// Columns to impute (default: all).
    #[arg(long, value_delimiter = ',')]
    pub variables: Vec<String>,
    /// Weight of a column in the global NMSE (repeatable; default: missing proportions).
    #[arg(long = "weight", value_parser = parse_pair)]
    pub weights: Vec<(String, String)>,
    /// Column never used as a predictor (repeatable).
    #[arg(long = "no-predictor")]
    pub no_predictor: Vec<String>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_probability)]
    pub p_obs: f64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_probability)]
    pub p_miss: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub model: PathBuf,
    /// Imputed training data.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Error trace CSV (default: <model>.trace.csv).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Model metadata JSON (default: <model>.json).
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Columns kept out of imputation and copied through (e.g. the outcome).
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub imputer: ImputerArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ImputeArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Complete data.
    #[arg(long)]
    pub truth: PathBuf,
    /// The amputed data; its missing cells are the ones scored.
    #[arg(long)]
    pub amputed: PathBuf,
    #[arg(long)]
    pub imputed: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    /// Complete data.
    #[arg(short, long)]
    pub input: PathBuf,
    /// JSON report (deterministic for a given seed).
    #[arg(short, long)]
    pub output: PathBuf,
    /// JSON timings per repetition.
    #[arg(long)]
    pub timings: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Columns kept out of imputation (e.g. the outcome).
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[command(flatten)]
    pub amputation: AmputationArgs,
    #[command(flatten)]
    pub imputer: ImputerArgs,
}
