//! Seeded discrete-event simulator for the conventional, RSUC and ReA schemes.
//!
//! Each replication runs a single-threaded event loop with its own RNG
//! streams (see [`rng`]); replications run in parallel and are merged in
//! index order, so a configuration always yields the same report.

pub mod arrivals;
pub mod cache;
mod engine;
pub mod events;
pub mod record;
pub mod rng;
pub mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use arrivals::ArrivalTrace;
pub use cache::CacheState;
pub use events::EventQueue;
pub use record::{DeliveryRecord, RecordWriter, RECORD_HEADER};
pub use rng::{assign_item, draw_exponential, ItemSampler, Purpose};
pub use stats::{mean_ci95, Divergence, LittleCheck, Moments, ReplicationStats, Station};

use crate::error::{Error, Result};
use crate::model::{PerfPoint, Scenario, SchemeParams};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 0x5EED_2024;
pub const DEFAULT_REQUESTS: u64 = 1_000_000;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;
pub const DEFAULT_REPLICATIONS: u32 = 10;
pub const DEFAULT_DIVERGENCE_BOUND: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warmup {
    /// Discard this fraction of the measured request count (or of the run
    /// duration when stopping on time).
    Fraction(f64),
    /// Discard everything arriving before this time.
    Duration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    /// Measure this many requests after warm-up.
    Requests(u64),
    /// Stop admitting arrivals at this time.
    Duration(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceDist {
    #[default]
    Exponential,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario<f64>,
    pub scheme: SchemeParams<f64>,
    pub rng_seed: u64,
    pub warmup: Warmup,
    pub stop: Stop,
    pub replications: u32,
    pub service: ServiceDist,
    /// Abort a replication once any waiting line exceeds this length.
    pub divergence_bound: usize,
    /// Piecewise-constant arrival rate replacing the scenario's total rate.
    pub trace: Option<ArrivalTrace>,
}

impl SimConfig {
    pub fn new(scenario: Scenario<f64>, scheme: SchemeParams<f64>) -> Self {
        Self {
            scenario,
            scheme,
            rng_seed: DEFAULT_SEED,
            warmup: Warmup::Fraction(DEFAULT_WARMUP_FRACTION),
            stop: Stop::Requests(DEFAULT_REQUESTS),
            replications: DEFAULT_REPLICATIONS,
            service: ServiceDist::Exponential,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            trace: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_requests(mut self, n: u64) -> Self {
        self.stop = Stop::Requests(n);
        self
    }

    pub fn with_replications(mut self, n: u32) -> Self {
        self.replications = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.scheme.validate(self.scenario.item_count_s)?;
        if let Some(beta) = self.scheme.beta() {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::invalid("beta", format!("must lie strictly inside (0, 1) to simulate, got {beta}")));
            }
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if self.divergence_bound == 0 {
            return Err(Error::invalid("divergence_bound", "must be positive"));
        }
        match self.trace {
            Some(ref trace) if trace.segments().iter().all(|&(_, r)| r == 0.0) => {
                return Err(Error::invalid("trace", "all segment rates are zero"));
            }
            None if self.scenario.total_lambda() <= 0.0 => {
                return Err(Error::invalid("lambda", "total arrival rate must be positive"));
            }
            _ => {}
        }
        match (self.warmup, self.stop) {
            (_, Stop::Requests(0)) => Err(Error::invalid("stop", "request count must be positive")),
            (Warmup::Fraction(f), _) if !(0.0..1.0).contains(&f) => {
                Err(Error::invalid("warmup", format!("fraction must lie in [0, 1), got {f}")))
            }
            (Warmup::Duration(d), _) if !(d >= 0.0 && d.is_finite()) => {
                Err(Error::invalid("warmup", format!("duration must be finite and >= 0, got {d}")))
            }
            (Warmup::Duration(d), Stop::Duration(t)) if t <= d => {
                Err(Error::invalid("stop", format!("duration {t} must exceed the warm-up {d}")))
            }
            (_, Stop::Duration(t)) if !(t > 0.0 && t.is_finite()) => {
                Err(Error::invalid("stop", format!("duration must be finite and positive, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// Merged outcome of all replications.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub perf: PerfPoint,
    pub replications: Vec<ReplicationStats>,
    /// First replication that hit the divergence bound, if any.
    pub diverged: Option<Divergence>,
}

impl SimReport {
    pub fn from_replications(replications: Vec<ReplicationStats>) -> Self {
        let diverged = replications.iter().find_map(|r| r.diverged);
        let lat: Vec<f64> = replications.iter().map(|r| r.latency.mean()).collect();
        let aoi: Vec<f64> = replications.iter().map(|r| r.aoi.mean()).collect();
        let (mean_latency, latency_ci95) = mean_ci95(&lat);
        let (mean_aoi, aoi_ci95) = mean_ci95(&aoi);
        let perf = PerfPoint {
            mean_latency,
            mean_aoi,
            latency_ci95,
            aoi_ci95,
            n_delivered: replications.iter().map(|r| r.n_delivered()).sum(),
        };
        Self {
            perf,
            replications,
            diverged,
        }
    }

    /// Worst Little's-law gap per station name across replications.
    pub fn little_gaps(&self) -> Vec<(&'static str, f64)> {
        let Some(first) = self.replications.first() else {
            return Vec::new();
        };
        (0..first.stations.len())
            .map(|i| {
                let gap = self
                    .replications
                    .iter()
                    .map(|r| r.stations[i].little().relative_gap())
                    .fold(0.0, f64::max);
                (first.stations[i].name, gap)
            })
            .collect()
    }

    /// RSUC install-to-install intervals pooled over replications.
    pub fn update_interval(&self) -> Moments {
        let mut m = Moments::default();
        self.replications.iter().for_each(|r| m.merge(&r.update_interval));
        m
    }

    /// ReA requests per update cycle of each item, pooled over replications.
    pub fn requests_between_updates(&self) -> Vec<Moments> {
        let mut out: Vec<Moments> = Vec::new();
        for r in &self.replications {
            out.resize(r.requests_between_updates.len(), Moments::default());
            out.iter_mut()
                .zip(&r.requests_between_updates)
                .for_each(|(a, b)| a.merge(b));
        }
        out
    }

    /// Per-item mean latency and AoI pooled over replications.
    pub fn item_means(&self) -> Vec<(f64, f64)> {
        let items = self.replications.first().map_or(0, |r| r.item_aoi.len());
        (0..items)
            .map(|s| {
                let (mut lat, mut aoi) = (Moments::default(), Moments::default());
                for r in &self.replications {
                    lat.merge(&r.item_latency[s]);
                    aoi.merge(&r.item_aoi[s]);
                }
                (lat.mean(), aoi.mean())
            })
            .collect()
    }
}

/// Runs every replication and merges them. Divergence is reported in the
/// result, not as an error; use [`SimReport::diverged`].
pub fn simulate(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let reps: Vec<ReplicationStats> = (0..u64::from(cfg.replications))
        .into_par_iter()
        .map(|rep| engine::run(cfg, rep, None))
        .collect();
    Ok(SimReport::from_replications(reps))
}

/// Runs one replication, handing each measured delivery to `sink`.
pub fn simulate_replication(
    cfg: &SimConfig,
    replication: u64,
    sink: Option<&mut dyn FnMut(&DeliveryRecord)>,
) -> Result<ReplicationStats> {
    cfg.validate()?;
    Ok(engine::run(cfg, replication, sink))
}

/// Like [`simulate`], but streams replication 0's deliveries to `sink`.
pub fn simulate_with_records(cfg: &SimConfig, sink: &mut dyn FnMut(&DeliveryRecord)) -> Result<SimReport> {
    cfg.validate()?;
    let first = engine::run(cfg, 0, Some(sink));
    let rest: Vec<ReplicationStats> = (1..u64::from(cfg.replications))
        .into_par_iter()
        .map(|rep| engine::run(cfg, rep, None))
        .collect();
    let mut reps = Vec::with_capacity(rest.len() + 1);
    reps.push(first);
    reps.extend(rest);
    Ok(SimReport::from_replications(reps))
}
