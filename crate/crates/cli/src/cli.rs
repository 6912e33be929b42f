use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hesslens::models::ModelSpec;
use hesslens::rng::ProbeDistribution;
use hesslens::spectral::SlqConfig;
use hesslens::train::LayerSelection;
use serde::Serialize;

use crate::inputs::{DataSource, Split};

#[derive(Debug, Parser)]
#[command(
    name = "hesslens",
    version,
    about = "Layerwise Hessian spectra, traces and trace-regularized training"
)]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model with SGD (optionally trace-regularized) and log curvature per epoch.
    Train(TrainArgs),
    /// Spectral densities and largest eigenvalues of a checkpoint's curvature operators.
    Spectrum(SpectrumArgs),
    /// Hutchinson trace estimates for one checkpoint or a directory of them.
    Trace(TraceArgs),
    /// Distances between each layer's Hessian density and the full one, plus outlier counts.
    Compare(CompareArgs),
    /// Export per-sample Gauss-Newton factor vectors and their class purity.
    Deltas(DeltasArgs),
    /// Dense Hessian, Gauss-Newton matrix, eigenvalues and exact traces (small models only).
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorArg {
    Hessian,
    /// Gauss-Newton term.
    G,
    /// Residual `Hess - G`.
    H,
}

impl OperatorArg {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorArg::Hessian => "hessian",
            OperatorArg::G => "g",
            OperatorArg::H => "h",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Full,
    Layers,
    Layer(usize),
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Scope::Full),
            "layers" => Ok(Scope::Layers),
            _ => s
                .strip_prefix("layer:")
                .and_then(|k| k.parse().ok())
                .map(Scope::Layer)
                .ok_or_else(|| format!("scope is full, layers or layer:K; got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Wasserstein,
    Js,
    Both,
}

fn parse_model(s: &str) -> Result<ModelSpec, String> {
    s.parse().map_err(|e: hesslens::Error| e.to_string())
}

fn parse_selection(s: &str) -> Result<LayerSelection, String> {
    s.parse().map_err(|e: hesslens::Error| e.to_string())
}

fn parse_dist(s: &str) -> Result<ProbeDistribution, String> {
    s.parse()
}

/// Where the data comes from and which split the curvature is measured on.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// `blobs:C=..,n=..,dim=..,sep=..`, `idx:IMAGES,LABELS` or an MNIST-layout directory.
    #[arg(long)]
    pub data: DataSource,

    #[arg(long, value_enum, default_value = "train")]
    pub split: Split,

    /// Samples in the fixed probe set the operators average over.
    #[arg(long, default_value_t = 2048)]
    pub probe_samples: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SlqArgs {
    /// Lanczos iterations per probe.
    #[arg(long, default_value_t = 80)]
    pub lanczos_m: usize,

    /// Density grid points.
    #[arg(long, default_value_t = 1024)]
    pub grid_k: usize,

    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,

    /// Lanczos probes per density.
    #[arg(long, default_value_t = 8)]
    pub probes: usize,

    /// Run the plain three-term recurrence without reorthogonalization.
    #[arg(long)]
    pub no_reorth: bool,
}

impl SlqArgs {
    pub fn config(&self, seed: u64) -> SlqConfig {
        SlqConfig {
            iterations: self.lanczos_m,
            grid: self.grid_k,
            kappa: self.kappa,
            probes: self.probes,
            seed,
            reorthogonalize: !self.no_reorth,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// `mlp:16-32-32-3`, `mlp-skip+bn:...` or `lenet:1x28x28:6-16:120-84:10:k5`.
    #[arg(long, value_parser = parse_model)]
    pub model: ModelSpec,

    #[arg(long)]
    pub data: DataSource,

    #[arg(long, default_value_t = 30)]
    pub epochs: usize,

    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,

    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,

    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,

    #[arg(long, default_value_t = 64)]
    pub batch: usize,

    #[arg(long, default_value_t = 0.0)]
    pub htr_gamma: f64,

    /// Steps between regularizer applications (0 disables it).
    #[arg(long, default_value_t = 0)]
    pub htr_freq: usize,

    /// `all`, `middle` or a comma-separated list of layer indices.
    #[arg(long, default_value = "all", value_parser = parse_selection)]
    pub htr_layers: LayerSelection,

    #[arg(long, default_value_t = 1)]
    pub htr_probes: usize,

    /// Hutchinson probes for the per-epoch trace metrics.
    #[arg(long, default_value_t = 16)]
    pub metric_probes: usize,

    /// Lanczos iterations for the per-epoch largest eigenvalues.
    #[arg(long, default_value_t = 20)]
    pub metric_lanczos: usize,

    /// Training samples backing the per-epoch curvature metrics.
    #[arg(long, default_value_t = 512)]
    pub metric_samples: usize,

    /// Skip curvature metrics (losses and accuracies are still logged).
    #[arg(long)]
    pub no_metrics: bool,

    /// Checkpoint every N epochs (0: final checkpoint only).
    #[arg(long, default_value_t = 1)]
    pub checkpoint_every: usize,

    #[arg(long, env = "HESSLENS_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, value_enum, default_value = "hessian")]
    pub operator: OperatorArg,

    /// `full`, `layers` or `layer:K`.
    #[arg(long, default_value = "full")]
    pub scope: Scope,

    #[command(flatten)]
    pub slq: SlqArgs,

    #[arg(long, env = "HESSLENS_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["ckpt", "ckpt_dir"])))]
pub struct TraceArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,

    /// Every `*.hlns` file in this directory, in epoch order.
    #[arg(long)]
    pub ckpt_dir: Option<PathBuf>,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, default_value_t = 100)]
    pub probes: usize,

    #[arg(long, default_value = "gaussian", value_parser = parse_dist)]
    pub dist: ProbeDistribution,

    /// `full` or `layers` (which also reports the full trace).
    #[arg(long, default_value = "full")]
    pub scope: Scope,

    #[arg(long, env = "HESSLENS_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, value_enum, default_value = "both")]
    pub metric: Metric,

    #[command(flatten)]
    pub slq: SlqArgs,

    #[arg(long, env = "HESSLENS_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DeltasArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    #[arg(long)]
    pub data: DataSource,

    #[arg(long, value_enum, default_value = "train")]
    pub split: Split,

    /// `full` or `layer:K`.
    #[arg(long, default_value = "full")]
    pub scope: Scope,

    #[arg(long, default_value_t = 512)]
    pub max_samples: usize,

    #[arg(long, env = "HESSLENS_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Lanczos iterations for the matrix-free largest eigenvalue reported alongside.
    #[arg(long, default_value_t = 32)]
    pub lanczos_m: usize,

    #[arg(long, env = "HESSLENS_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,
}
