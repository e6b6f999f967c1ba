use std::path::PathBuf;

use abigx::afr::Norm;
use abigx::explainers::Method;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "abigx",
    version,
    about = "Fault explanation with adversarial reconstruction baselines"
)]
pub struct Cli {
    /// Worker threads for batch work; overrides the ABIGX_WORKERS variable.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a seeded synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Train a pca, ae or mlp model and save it as JSON.
    Train(TrainArgs),
    /// Explain one sample and write the attribution plus an SVG bar chart.
    Explain(ExplainArgs),
    /// Score explanation methods on every fault sample of a dataset.
    Evaluate(EvaluateArgs),
    /// Run the built-in numerical verification suite.
    Verify(VerifyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// Mean-shift toy problem: fault y shifts variable y.
    Toy,
    /// Latent-factor process with single-variable faults.
    Process,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pca,
    Ae,
    Mlp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AfrSolver {
    /// Closed form where one exists (PCA), gradient descent otherwise.
    Auto,
    /// Closed form only; rejected for models without one.
    Exact,
    /// Projected gradient descent (line search for one-variable AFR).
    Pgd,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AfrObjective {
    /// Detection SPE, or representation-space SPE for classifiers.
    Spe,
    /// Classifiers only: `1 − p(normal)`.
    Confidence,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value_t = DataKind::Toy)]
    pub kind: DataKind,
    /// Toy: number of variables.
    #[arg(long = "M", default_value_t = 10)]
    pub m: usize,
    /// Toy: number of fault types.
    #[arg(long = "N", default_value_t = 5)]
    pub n: usize,
    /// Toy: fault shift.
    #[arg(long, default_value_t = 1.0)]
    pub f: f64,
    /// Toy: noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Toy: samples per class, normality included.
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    /// Process: number of variables.
    #[arg(long, default_value_t = 10)]
    pub vars: usize,
    /// Process: latent factors.
    #[arg(long, default_value_t = 3)]
    pub latent: usize,
    /// Process: measurement noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Process: normal samples.
    #[arg(long, default_value_t = 500)]
    pub train: usize,
    /// Process: fault samples per variable.
    #[arg(long, default_value_t = 20)]
    pub per_var: usize,
    /// Process: fault size in standard deviations.
    #[arg(long, default_value_t = 4.0)]
    pub magnitude: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub kind: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// PCA: retained components.
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// AE: layer widths, e.g. 10,6,3,6,10 (default derived from the variable count).
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// MLP: hidden layer widths; the last is the representation layer.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    pub hidden: Vec<usize>,
    /// Training epochs (AE default 2000, MLP default 400).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate (AE default 0.02, MLP default 0.5).
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Quantile of normal training statistics used as the control limit.
    #[arg(long, default_value_t = 0.99)]
    pub quantile: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AfrArgs {
    /// Integration steps for IG and ABIGX.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value = "l2")]
    pub norm: Norm,
    /// Perturbation budget: a number or `auto`.
    #[arg(long, default_value = "auto")]
    pub eta: String,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    /// AFR success target; defaults to the calibrated control limit.
    #[arg(long)]
    pub target: Option<f64>,
    /// CSV of normal samples for calibration (default: normal rows of --data).
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value_t = 0.99)]
    pub quantile: f64,
    #[arg(long, value_enum, default_value_t = AfrSolver::Auto)]
    pub afr: AfrSolver,
    #[arg(long, value_enum, default_value_t = AfrObjective::Spe)]
    pub afr_objective: AfrObjective,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Row index (0-based, excluding the header).
    #[arg(long, conflicts_with = "label")]
    pub sample: Option<usize>,
    /// Explain the first sample with this label.
    #[arg(long)]
    pub label: Option<usize>,
    #[arg(long)]
    pub method: Method,
    /// Classifiers: class whose logit is explained (default: sample label, else prediction).
    #[arg(long)]
    pub class: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub afr: AfrArgs,
    /// Bars shown in the SVG chart.
    #[arg(long, default_value_t = 8)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated methods; `oracle` scores the ground-truth indicator.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub afr: AfrArgs,
    /// Evaluate at most this many fault samples, spread evenly over the file.
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Output prefix; `.json` and `.txt` are appended.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// Run only these checks (repeatable).
    #[arg(long)]
    pub only: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Output prefix; `.json` and `.txt` are appended.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}
