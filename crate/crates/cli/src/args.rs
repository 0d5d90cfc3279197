use std::path::PathBuf;

use carbcal::simstudy::Family;
use carbcal::{Hyperparameters, SamplerKind};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "carbcal", version, about = "Bayesian nonparametric calibration of radiocarbon determinations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate each determination independently on a calendar grid.
    Calibrate(CalibrateArgs),
    /// Summed probability distribution of the independent posteriors.
    Spd(SpdArgs),
    /// Joint calibration under a Dirichlet process mixture.
    Dpmm(DpmmArgs),
    /// Simulation study comparing joint and independent calibration.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Calibration curve file [default: $CARBCAL_CURVE, else bundled IntCal20].
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Output directory [default: a new directory named by time and seed].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Allow writing into an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Determinations file with header `id,c14_age,c14_sig`.
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Calendar grid spacing in years.
    #[arg(long, default_value_t = 1.0)]
    pub resolution: f64,
    /// HPD probability levels.
    #[arg(long, value_delimiter = ',', default_values_t = [0.683, 0.954])]
    pub levels: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SpdArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1.0)]
    pub resolution: f64,
}

/// A `key=value` hyperparameter override.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: String,
}

pub fn parse_override(s: &str) -> Result<Override, String> {
    let (key, value) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let key = key.trim();
    if !Hyperparameters::KEYS.contains(&key) {
        return Err(format!(
            "unknown hyperparameter {key:?}; expected one of {}",
            Hyperparameters::KEYS.join(", ")
        ));
    }
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| format!("{key}: not a number: {value:?}"))?;
    Ok(Override {
        key: key.to_owned(),
        value: value.trim().to_owned(),
    })
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hyperparameter override, repeatable; other keys use the data-driven defaults.
    #[arg(long = "hyper", value_name = "KEY=VALUE", value_parser = parse_override)]
    pub hyper: Vec<Override>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DpmmArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, value_parser = parse_sampler, default_value = "walker")]
    pub sampler: SamplerKind,
    #[arg(long, default_value_t = 50_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 25_000)]
    pub burn: usize,
    #[arg(long, default_value_t = 5)]
    pub thin: usize,
    /// Independent chains with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Pointwise band level of the predictive density.
    #[arg(long, default_value_t = 0.95)]
    pub band: f64,
    /// HPD levels of the per-determination summaries.
    #[arg(long, value_delimiter = ',', default_values_t = [0.683, 0.954])]
    pub levels: Vec<f64>,
    /// Histogram bin width for HPD regions from draws.
    #[arg(long, default_value_t = 5.0)]
    pub hpd_bin: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_family, default_value = "single_normal")]
    pub family: Vec<Family>,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_sampler, default_value = "polya,walker")]
    pub sampler: Vec<SamplerKind>,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 5_000)]
    pub burn: usize,
    #[arg(long, default_value_t = 5)]
    pub thin: usize,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: carbcal::Error| e.to_string())
}

fn parse_sampler(s: &str) -> Result<SamplerKind, String> {
    s.parse().map_err(|e: carbcal::Error| e.to_string())
}
