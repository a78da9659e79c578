use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "dispest", version, about = "Displacement-estimation bounds, simulations and figure data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cramér-Rao bounds for a probe
    Bounds(BoundsArgs),
    /// Monte Carlo estimation run
    Simulate(SimulateArgs),
    /// Write the data behind a figure as CSV
    Figure(FigureArgs),
    /// Evaluate quantities over a parameter grid (long-format CSV)
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    Coherent,
    Single,
    Tmst,
    TmstAsym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long, value_enum, default_value = "tmst")]
    pub probe: ProbeKind,
    /// Squeezing parameter
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    /// Thermal photon number (symmetric probes)
    #[serde(rename = "N")]
    #[arg(long = "N", conflicts_with_all = ["n1", "n2"])]
    pub n: Option<f64>,
    #[serde(rename = "N1")]
    #[arg(long = "N1", requires = "n2")]
    pub n1: Option<f64>,
    #[serde(rename = "N2")]
    #[arg(long = "N2", requires = "n1")]
    pub n2: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub probe: ProbeArgs,
    /// Width of the Gaussian prior on each parameter
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of repeated measurements
    #[serde(rename = "M")]
    #[arg(long = "M", default_value_t = 1)]
    pub shots: u64,
    /// Weight matrix entries g11,g12,g22
    #[serde(rename = "G")]
    #[arg(long = "G", value_parser = parse_weight)]
    pub weight: Option<[f64; 3]>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "k", rename_all = "lowercase")]
pub enum ScalingArg {
    None,
    Coherent,
    Optimal,
    Explicit(f64),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub r: f64,
    #[serde(rename = "N")]
    #[arg(long = "N", conflicts_with_all = ["n1", "n2"])]
    pub n: Option<f64>,
    #[serde(rename = "N1")]
    #[arg(long = "N1", requires = "n2")]
    pub n1: Option<f64>,
    #[serde(rename = "N2")]
    #[arg(long = "N2", requires = "n1")]
    pub n2: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "prior_delta")]
    pub q0: Option<f64>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "prior_delta")]
    pub p0: Option<f64>,
    /// Redraw (q0, p0) every shot from N(0, D²)
    #[arg(long)]
    pub prior_delta: Option<f64>,
    /// none | coherent | optimal | K=<value>
    #[arg(long, value_parser = parse_scaling, default_value = "none")]
    pub scaling: ScalingArg,
    /// Jitter variances dq2,dp2
    #[arg(long, value_parser = parse_pair)]
    pub jitter: Option<[f64; 2]>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Heterodyne detection on a single-mode probe instead of the two-mode scheme
    #[arg(long)]
    pub baseline: bool,
    /// Write every shot to this CSV file
    #[arg(long)]
    pub shots_csv: Option<PathBuf>,
    /// Also write the JSON record to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureName {
    Fig2,
    Fig3,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FigureArgs {
    #[arg(value_enum)]
    pub name: FigureName,
    /// Output directory (falls back to $DISPEST_OUT_DIR, then the working directory)
    #[arg(long, env = "DISPEST_OUT_DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub r_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub r_max: f64,
    /// Number of grid points
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Thermal photon numbers of the fig2 curves
    #[serde(rename = "Ns")]
    #[arg(long = "Ns", value_delimiter = ',', default_values_t = [0.0, 0.5, 2.0])]
    pub ns: Vec<f64>,
    /// Thermal photon number of the fig3 curves
    #[serde(rename = "N")]
    #[arg(long = "N", default_value_t = 1.0)]
    pub n: f64,
    /// Prior widths of the fig3 files
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0, 5.0])]
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize)]
pub enum Quantity {
    #[value(name = "B_S")]
    #[serde(rename = "B_S")]
    BS,
    #[value(name = "B_R")]
    #[serde(rename = "B_R")]
    BR,
    #[value(name = "B_MI")]
    #[serde(rename = "B_MI")]
    BMi,
    /// Scheme variance sum
    #[value(name = "E")]
    #[serde(rename = "E")]
    E,
    #[value(name = "E_minus_B_MI")]
    #[serde(rename = "E_minus_B_MI")]
    EMinusBMi,
    #[value(name = "D")]
    #[serde(rename = "D")]
    D,
    #[value(name = "duan_lhs")]
    #[serde(rename = "duan_lhs")]
    DuanLhs,
    #[value(name = "mse_Kmin")]
    #[serde(rename = "mse_Kmin")]
    MseKmin,
    #[value(name = "mse_Kc")]
    #[serde(rename = "mse_Kc")]
    MseKc,
    #[value(name = "B_SQL")]
    #[serde(rename = "B_SQL")]
    BSql,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::BS => "B_S",
            Quantity::BR => "B_R",
            Quantity::BMi => "B_MI",
            Quantity::E => "E",
            Quantity::EMinusBMi => "E_minus_B_MI",
            Quantity::D => "D",
            Quantity::DuanLhs => "duan_lhs",
            Quantity::MseKmin => "mse_Kmin",
            Quantity::MseKc => "mse_Kc",
            Quantity::BSql => "B_SQL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Axis {
    #[value(name = "r")]
    #[serde(rename = "r")]
    R,
    #[value(name = "N")]
    #[serde(rename = "N")]
    N,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Quantities to evaluate
    #[arg(value_enum, required = true)]
    pub quantities: Vec<Quantity>,
    #[arg(long, value_enum, default_value = "r")]
    pub over: Axis,
    #[arg(long, default_value_t = 0.0)]
    pub min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub max: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Squeezing held fixed when sweeping N
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    /// Thermal photon number held fixed when sweeping r
    #[serde(rename = "N")]
    #[arg(long = "N", default_value_t = 0.0)]
    pub n: f64,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}"))
}

fn parse_weight(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(parse_f64).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected g11,g12,g22".to_string())
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s.split(',').map(parse_f64).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected two comma-separated values".to_string())
}

fn parse_scaling(s: &str) -> Result<ScalingArg, String> {
    match s {
        "none" => Ok(ScalingArg::None),
        "coherent" => Ok(ScalingArg::Coherent),
        "optimal" => Ok(ScalingArg::Optimal),
        _ => match s.strip_prefix("K=") {
            Some(k) => parse_f64(k).map(ScalingArg::Explicit),
            None => Err("expected none, coherent, optimal or K=<value>".into()),
        },
    }
}
