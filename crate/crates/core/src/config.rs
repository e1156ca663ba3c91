//! TOML run configuration shared by the library and the command line.
//!
//! Every key is optional at parse time so that a file and a set of flags can
//! be layered with [`RunConfig::overlay`]; required keys are checked when a
//! [`Scenario`] or [`SchemeParams`] is built.
//!
//! ```toml
//! r_ul = 1000.0
//! r_dl = 1000.0
//! items = 2
//! lambda_total = 200.0
//! popularity = "zipf:0.56"
//!
//! [scheme]
//! kind = "rea"
//! update_prob = [0.3, 0.5]
//!
//! [sim]
//! seed = 7
//! requests = 100000
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::desim::{ServiceDist, SimConfig, Stop, Warmup};
use crate::error::{Error, Result};
use crate::model::{ChannelRates, Popularity, Scenario, SchemeKind, SchemeParams};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub r_ul: Option<f64>,
    pub r_dl: Option<f64>,
    pub items: Option<usize>,
    pub lambda_total: Option<f64>,
    pub popularity: Option<Popularity>,
    pub lambda_list: Option<Vec<f64>>,
    pub scheme: Option<SchemeBlock>,
    pub sim: Option<SimBlock>,
    pub optimize: Option<OptimizeBlock>,
    pub sweep: Option<SweepBlock>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeBlock {
    pub kind: Option<SchemeKind>,
    pub beta: Option<f64>,
    pub update_prob: Option<UpdateProb>,
}

/// One probability for every item, or one per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UpdateProb {
    All(f64),
    PerItem(Vec<f64>),
}

impl UpdateProb {
    pub fn expand(&self, items: usize) -> Vec<f64> {
        match self {
            UpdateProb::All(p) => vec![*p; items],
            UpdateProb::PerItem(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub seed: Option<u64>,
    pub requests: Option<u64>,
    /// Stop admitting arrivals at this time instead of after `requests`.
    pub duration: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub warmup_duration: Option<f64>,
    pub replications: Option<u32>,
    pub service: Option<ServiceDist>,
    pub divergence_bound: Option<usize>,
    /// CSV arrival trace with header `time,lambda`.
    pub trace: Option<PathBuf>,
    /// Where to write replication 0's delivery records.
    pub records: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    P1,
    P2,
    P3,
    P4,
}

impl std::str::FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Problem::P1),
            "p2" => Ok(Problem::P2),
            "p3" => Ok(Problem::P3),
            "p4" => Ok(Problem::P4),
            _ => Err(Error::invalid("problem", format!("expected p1, p2, p3 or p4, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeBlock {
    pub problem: Option<Problem>,
    pub aoi_cap: Option<f64>,
    pub weight_aoi: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub family: Option<String>,
    /// Arrival rates (validation) or AoI caps (trade-off, capacity, compare).
    pub grid: Option<Vec<f64>>,
    pub simulate: Option<bool>,
    pub tolerance: Option<f64>,
    /// Item counts for the scheme comparison.
    pub items_grid: Option<Vec<usize>>,
    pub popularity_grid: Option<Vec<Popularity>>,
    /// `[r_ul, r_dl]` pairs for the scheme comparison.
    pub rates_grid: Option<Vec<[f64; 2]>>,
    pub schemes: Option<Vec<SchemeParams>>,
    pub output: Option<PathBuf>,
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing required key `{key}`"))
}

/// `base` unless `over` is set.
fn pick<T>(base: Option<T>, over: Option<T>) -> Option<T> {
    over.or(base)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Config describing exactly `scenario` and `scheme`.
    pub fn from_parts(scenario: &Scenario, scheme: &SchemeParams) -> Self {
        let block = match scheme {
            SchemeParams::Conventional { beta } | SchemeParams::Rsuc { beta } => SchemeBlock {
                kind: Some(scheme.kind()),
                beta: Some(*beta),
                update_prob: None,
            },
            SchemeParams::Rea { update_prob } => SchemeBlock {
                kind: Some(SchemeKind::Rea),
                beta: None,
                update_prob: Some(UpdateProb::PerItem(update_prob.clone())),
            },
        };
        Self {
            r_ul: Some(scenario.rates.r_ul),
            r_dl: Some(scenario.rates.r_dl),
            items: Some(scenario.item_count_s),
            lambda_list: Some(scenario.lambda_s.clone()),
            scheme: Some(block),
            ..Self::default()
        }
    }

    /// Keys set in `over` replace those in `self`, block by block.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        // A rate list and a popularity spec are alternatives; the overriding
        // side's choice wins outright.
        let (lambda_total, popularity, lambda_list) = if over.lambda_list.is_some() {
            (None, None, over.lambda_list)
        } else if over.lambda_total.is_some() || over.popularity.is_some() {
            (
                pick(self.lambda_total, over.lambda_total),
                pick(self.popularity, over.popularity),
                None,
            )
        } else {
            (self.lambda_total, self.popularity, self.lambda_list)
        };
        RunConfig {
            r_ul: pick(self.r_ul, over.r_ul),
            r_dl: pick(self.r_dl, over.r_dl),
            items: pick(self.items, over.items),
            lambda_total,
            popularity,
            lambda_list,
            scheme: merge_opt(self.scheme, over.scheme, |a, b| SchemeBlock {
                kind: pick(a.kind, b.kind),
                beta: pick(a.beta, b.beta),
                update_prob: pick(a.update_prob, b.update_prob),
            }),
            sim: merge_opt(self.sim, over.sim, |a, b| SimBlock {
                seed: pick(a.seed, b.seed),
                requests: pick(a.requests, b.requests),
                duration: pick(a.duration, b.duration),
                warmup_fraction: pick(a.warmup_fraction, b.warmup_fraction),
                warmup_duration: pick(a.warmup_duration, b.warmup_duration),
                replications: pick(a.replications, b.replications),
                service: pick(a.service, b.service),
                divergence_bound: pick(a.divergence_bound, b.divergence_bound),
                trace: pick(a.trace, b.trace),
                records: pick(a.records, b.records),
            }),
            optimize: merge_opt(self.optimize, over.optimize, |a, b| OptimizeBlock {
                problem: pick(a.problem, b.problem),
                aoi_cap: pick(a.aoi_cap, b.aoi_cap),
                weight_aoi: pick(a.weight_aoi, b.weight_aoi),
                tol: pick(a.tol, b.tol),
                max_iter: pick(a.max_iter, b.max_iter),
            }),
            sweep: merge_opt(self.sweep, over.sweep, |a, b| SweepBlock {
                family: pick(a.family, b.family),
                grid: pick(a.grid, b.grid),
                simulate: pick(a.simulate, b.simulate),
                tolerance: pick(a.tolerance, b.tolerance),
                items_grid: pick(a.items_grid, b.items_grid),
                popularity_grid: pick(a.popularity_grid, b.popularity_grid),
                rates_grid: pick(a.rates_grid, b.rates_grid),
                schemes: pick(a.schemes, b.schemes),
                output: pick(a.output, b.output),
            }),
        }
    }

    pub fn rates(&self) -> Result<ChannelRates> {
        let r_ul = self.r_ul.ok_or_else(|| missing("r_ul"))?;
        let r_dl = self.r_dl.ok_or_else(|| missing("r_dl"))?;
        ChannelRates::new(r_ul, r_dl)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let rates = self.rates()?;
        if let Some(list) = &self.lambda_list {
            if self.lambda_total.is_some() || self.popularity.is_some() {
                return Err(Error::Config(
                    "give either `lambda_list` or `lambda_total` with `popularity`, not both".into(),
                ));
            }
            if let Some(items) = self.items {
                if items != list.len() {
                    return Err(Error::invalid(
                        "lambda_list",
                        format!("{} rates for items = {items}", list.len()),
                    ));
                }
            }
            return Scenario::from_rates(rates, list.clone());
        }
        let items = self.items.ok_or_else(|| missing("items"))?;
        let total = self
            .lambda_total
            .ok_or_else(|| missing("lambda_total` (or `lambda_list"))?;
        let pop = self.popularity.clone().unwrap_or(Popularity::Uniform);
        Scenario::from_popularity(rates, total, &pop, items)
    }

    pub fn scheme_kind(&self) -> Result<SchemeKind> {
        self.scheme
            .as_ref()
            .and_then(|s| s.kind)
            .ok_or_else(|| missing("scheme.kind"))
    }

    pub fn scheme(&self, items: usize) -> Result<SchemeParams> {
        let block = self.scheme.as_ref().ok_or_else(|| missing("scheme"))?;
        let params = match self.scheme_kind()? {
            SchemeKind::Conventional => SchemeParams::Conventional {
                beta: block.beta.ok_or_else(|| missing("scheme.beta"))?,
            },
            SchemeKind::Rsuc => SchemeParams::Rsuc {
                beta: block.beta.ok_or_else(|| missing("scheme.beta"))?,
            },
            SchemeKind::Rea => SchemeParams::Rea {
                update_prob: block
                    .update_prob
                    .as_ref()
                    .ok_or_else(|| missing("scheme.update_prob"))?
                    .expand(items),
            },
        };
        params.validate(items)?;
        Ok(params)
    }

    pub fn sim_block(&self) -> SimBlock {
        self.sim.clone().unwrap_or_default()
    }

    pub fn optimize_block(&self) -> OptimizeBlock {
        self.optimize.clone().unwrap_or_default()
    }

    pub fn sweep_block(&self) -> SweepBlock {
        self.sweep.clone().unwrap_or_default()
    }

    /// Simulation settings on top of the library defaults. The trace file,
    /// if any, is read here.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let scenario = self.scenario()?;
        let scheme = self.scheme(scenario.item_count_s)?;
        let sim = self.sim_block();
        let mut cfg = SimConfig::new(scenario, scheme);
        if let Some(seed) = sim.seed {
            cfg.rng_seed = seed;
        }
        cfg.stop = match (sim.requests, sim.duration) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either `sim.requests` or `sim.duration`, not both".into()))
            }
            (Some(n), None) => Stop::Requests(n),
            (None, Some(t)) => Stop::Duration(t),
            (None, None) => cfg.stop,
        };
        cfg.warmup = match (sim.warmup_fraction, sim.warmup_duration) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either `sim.warmup_fraction` or `sim.warmup_duration`, not both".into(),
                ))
            }
            (Some(f), None) => Warmup::Fraction(f),
            (None, Some(d)) => Warmup::Duration(d),
            (None, None) => cfg.warmup,
        };
        if let Some(r) = sim.replications {
            cfg.replications = r;
        }
        if let Some(s) = sim.service {
            cfg.service = s;
        }
        if let Some(b) = sim.divergence_bound {
            cfg.divergence_bound = b;
        }
        if let Some(path) = &sim.trace {
            let file = fs::File::open(path)
                .map_err(|e| Error::Config(format!("cannot read trace {}: {e}", path.display())))?;
            cfg.trace = Some(crate::desim::ArrivalTrace::from_csv(file)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge_opt<T>(base: Option<T>, over: Option<T>, f: impl FnOnce(T, T) -> T) -> Option<T> {
    match (base, over) {
        (Some(a), Some(b)) => Some(f(a, b)),
        (a, b) => b.or(a),
    }
}
