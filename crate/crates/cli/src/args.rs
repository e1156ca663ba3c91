use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rsu_freshness::config::{OptimizeBlock, Problem, RunConfig, SchemeBlock, SimBlock, SweepBlock, UpdateProb};
use rsu_freshness::desim::ServiceDist;
use rsu_freshness::{Popularity, SchemeKind};

use crate::output::Format;

/// Freshness-aware RSU caching: closed forms, optimizers, simulation and sweeps.
///
/// Every flag can also be given in a TOML file passed with `--config`; flags
/// win over the file. Top-level keys use the flag name with `_` for `-`
/// (`--r-ul` is `r_ul`), scheme flags live under `[scheme]` (`--scheme` is
/// `kind`), simulation flags under `[sim]`, optimizer flags under
/// `[optimize]` and sweep flags under `[sweep]`.
#[derive(Debug, Parser)]
#[command(name = "rsu-fresh", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate closed-form latency, AoI and capacity.
    Analytic(AnalyticArgs),
    /// Run the discrete-event simulator.
    Simulate(SimulateArgs),
    /// Solve one of the optimization problems p1..p4.
    Optimize(OptimizeArgs),
    /// Run an experiment family and write a table.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Latency,
    Aoi,
    Capacity,
    All,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Full-band uplink rate, items per second [key: r_ul].
    #[arg(long)]
    pub r_ul: Option<f64>,
    /// Full-band downlink rate, items per second [key: r_dl].
    #[arg(long)]
    pub r_dl: Option<f64>,
    /// Number of content items [key: items].
    #[arg(long)]
    pub items: Option<usize>,
    /// Total request rate, spread over items by popularity [key: lambda_total].
    #[arg(long)]
    pub lambda_total: Option<f64>,
    /// `uniform`, `zipf:THETA` or `explicit:W1,W2,...` [key: popularity].
    #[arg(long)]
    pub popularity: Option<Popularity>,
    /// Per-item request rates, comma separated [key: lambda_list].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub lambda_list: Option<Vec<f64>>,
    /// `conventional`, `rsuc` or `rea` [key: scheme.kind].
    #[arg(long)]
    pub scheme: Option<SchemeKind>,
    /// Uplink share of the band for conventional and RSUC [key: scheme.beta].
    #[arg(long)]
    pub beta: Option<f64>,
    /// ReA update probability: one value for all items or one per item [key: scheme.update_prob].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub update_prob: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Significant digits in table output.
    #[arg(long, default_value_t = 6)]
    pub digits: usize,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Base seed; replications derive their streams from it [key: sim.seed].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Measured requests per replication [key: sim.requests].
    #[arg(long)]
    pub requests: Option<u64>,
    /// Stop admitting arrivals at this time instead [key: sim.duration].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Fraction of the run discarded as warm-up [key: sim.warmup_fraction].
    #[arg(long)]
    pub warmup_fraction: Option<f64>,
    /// Discard arrivals before this time [key: sim.warmup_duration].
    #[arg(long)]
    pub warmup_duration: Option<f64>,
    /// Independent replications [key: sim.replications].
    #[arg(long)]
    pub replications: Option<u32>,
    /// `exponential` or `constant` service times [key: sim.service].
    #[arg(long, value_parser = parse_service)]
    pub service: Option<ServiceDist>,
    /// Abort a replication once a queue exceeds this length [key: sim.divergence_bound].
    #[arg(long)]
    pub divergence_bound: Option<usize>,
    /// Arrival-rate trace, CSV with header `time,lambda` [key: sim.trace].
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Write replication 0's delivery records to this CSV [key: sim.records].
    #[arg(long, value_name = "PATH")]
    pub records: Option<PathBuf>,
}

fn parse_service(s: &str) -> Result<ServiceDist, String> {
    match s.to_ascii_lowercase().as_str() {
        "exponential" | "exp" => Ok(ServiceDist::Exponential),
        "constant" | "deterministic" => Ok(ServiceDist::Constant),
        _ => Err(format!("expected `exponential` or `constant`, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Metric::All)]
    pub metric: Metric,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `p1`, `p2`, `p3` or `p4` [key: optimize.problem].
    #[arg(long)]
    pub problem: Option<Problem>,
    /// Average AoI requirement in seconds, for p3 and p4 [key: optimize.aoi_cap].
    #[arg(long)]
    pub aoi_cap: Option<f64>,
    /// AoI weight for p2 [key: optimize.weight_aoi].
    #[arg(long)]
    pub weight_aoi: Option<f64>,
    /// Bisection tolerance for p2 [key: optimize.tol].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Bisection iteration cap for p2 [key: optimize.max_iter].
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// validation, aoi_latency_tradeoff, capacity_aoi, scheme_compare or trace [key: sweep.family].
    #[arg(long)]
    pub family: Option<String>,
    /// Arrival rates (validation) or AoI caps, comma separated [key: sweep.grid].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub grid: Option<Vec<f64>>,
    /// Simulate alongside the closed forms (validation, trace) [key: sweep.simulate].
    #[arg(long)]
    pub simulate: Option<bool>,
    /// Relative agreement band for validation flags [key: sweep.tolerance].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Item counts for scheme_compare [key: sweep.items_grid].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub items_grid: Option<Vec<usize>>,
    /// Popularity models for scheme_compare, `;` separated [key: sweep.popularity_grid].
    #[arg(long, value_delimiter = ';', num_args = 1..)]
    pub popularity_grid: Option<Vec<Popularity>>,
    /// `R_UL:R_DL` pairs for scheme_compare, comma separated [key: sweep.rates_grid].
    #[arg(long, value_delimiter = ',', num_args = 1.., value_parser = parse_rate_pair)]
    pub rates_grid: Option<Vec<[f64; 2]>>,
    /// Output file; `.json` selects JSON, anything else CSV. Stdout when absent [key: sweep.output].
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
}

fn parse_rate_pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected R_UL:R_DL, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok([p(a)?, p(b)?])
}

impl ModelArgs {
    pub fn overrides(&self) -> RunConfig {
        let scheme = (self.scheme.is_some() || self.beta.is_some() || self.update_prob.is_some()).then(|| SchemeBlock {
            kind: self.scheme,
            beta: self.beta,
            update_prob: self.update_prob.as_ref().map(|v| match v.as_slice() {
                [p] => UpdateProb::All(*p),
                _ => UpdateProb::PerItem(v.clone()),
            }),
        });
        RunConfig {
            r_ul: self.r_ul,
            r_dl: self.r_dl,
            items: self.items,
            lambda_total: self.lambda_total,
            popularity: self.popularity.clone(),
            lambda_list: self.lambda_list.clone(),
            scheme,
            ..RunConfig::default()
        }
    }
}

impl SimArgs {
    pub fn block(&self) -> SimBlock {
        SimBlock {
            seed: self.seed,
            requests: self.requests,
            duration: self.duration,
            warmup_fraction: self.warmup_fraction,
            warmup_duration: self.warmup_duration,
            replications: self.replications,
            service: self.service,
            divergence_bound: self.divergence_bound,
            trace: self.trace.clone(),
            records: self.records.clone(),
        }
    }
}

impl OptimizeArgs {
    pub fn block(&self) -> OptimizeBlock {
        OptimizeBlock {
            problem: self.problem,
            aoi_cap: self.aoi_cap,
            weight_aoi: self.weight_aoi,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

impl SweepArgs {
    pub fn block(&self) -> SweepBlock {
        SweepBlock {
            family: self.family.clone(),
            grid: self.grid.clone(),
            simulate: self.simulate,
            tolerance: self.tolerance,
            items_grid: self.items_grid.clone(),
            popularity_grid: self.popularity_grid.clone(),
            rates_grid: self.rates_grid.clone(),
            schemes: None,
            output: self.output.clone(),
        }
    }
}
