//! Experiment families: analytic-vs-simulation validation, AoI/latency and
//! AoI/capacity trade-off curves, multi-item scheme comparison and
//! trace-driven runs. Every family returns typed rows that serialize to CSV
//! or JSON.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::analytic::{self, rea_capacity, rea_latency, rsuc_aoi, rsuc_latency};
use crate::desim::{
    self, ArrivalTrace, Moments, SimConfig, SimReport, Stop, Warmup, DEFAULT_DIVERGENCE_BOUND, DEFAULT_REPLICATIONS,
    DEFAULT_REQUESTS, DEFAULT_SEED, DEFAULT_WARMUP_FRACTION,
};
use crate::error::{Error, Result};
use crate::model::{update_ratio, ChannelRates, Popularity, Scenario, SchemeKind, SchemeParams};
use crate::optimize::{p1_opt_beta, p3_min_beta, p4_floor, p4_solve, rsuc_capacity_at_aoi, theorem4_min_aoi};

/// Default analytic/simulation agreement band.
pub const DEFAULT_TOLERANCE: f64 = 0.03;
/// Wider band for ReA AoI, whose closed form treats departures as Poisson.
pub const REA_AOI_TOLERANCE: f64 = 0.05;
/// Number of AoI caps in the default trade-off grids.
pub const DEFAULT_CAP_POINTS: usize = 30;
/// Relative precision of the ReA capacity search.
pub const CAPACITY_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Validation,
    AoiLatencyTradeoff,
    CapacityAoi,
    SchemeCompare,
    Trace,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "validation" => Ok(Family::Validation),
            "aoi_latency_tradeoff" | "tradeoff" => Ok(Family::AoiLatencyTradeoff),
            "capacity_aoi" | "capacity" => Ok(Family::CapacityAoi),
            "scheme_compare" | "compare" => Ok(Family::SchemeCompare),
            "trace" => Ok(Family::Trace),
            _ => Err(Error::invalid(
                "family",
                format!(
                    "`{s}` is not one of validation, aoi_latency_tradeoff, capacity_aoi, scheme_compare, trace"
                ),
            )),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Validation => "validation",
            Family::AoiLatencyTradeoff => "aoi_latency_tradeoff",
            Family::CapacityAoi => "capacity_aoi",
            Family::SchemeCompare => "scheme_compare",
            Family::Trace => "trace",
        })
    }
}

/// Simulation settings applied to every point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub seed: u64,
    pub requests: u64,
    pub replications: u32,
    pub warmup_fraction: f64,
    pub divergence_bound: usize,
    /// Run length for trace-driven simulation.
    pub duration: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            requests: DEFAULT_REQUESTS,
            replications: DEFAULT_REPLICATIONS,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            duration: None,
        }
    }
}

impl SimSettings {
    fn config(&self, scenario: Scenario, scheme: SchemeParams) -> SimConfig {
        let mut cfg = SimConfig::new(scenario, scheme)
            .with_seed(self.seed)
            .with_requests(self.requests)
            .with_replications(self.replications);
        cfg.warmup = Warmup::Fraction(self.warmup_fraction);
        cfg.divergence_bound = self.divergence_bound;
        cfg
    }
}

/// Configurations crossed by the scheme comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareGrid {
    pub items: Vec<usize>,
    pub popularity: Vec<Popularity>,
    pub rates: Vec<ChannelRates>,
}

impl Default for CompareGrid {
    fn default() -> Self {
        Self {
            items: vec![1, 5, 10],
            popularity: vec![Popularity::Uniform, Popularity::Zipf { theta: 0.56 }],
            rates: vec![
                ChannelRates { r_ul: 1000.0, r_dl: 1000.0 },
                ChannelRates { r_ul: 300.0, r_dl: 1000.0 },
                ChannelRates { r_ul: 1000.0, r_dl: 300.0 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub family: Family,
    /// Fixed scenario; its total rate is rescaled where the family sweeps it.
    pub scenario: Scenario,
    /// Arrival rates for validation, AoI caps otherwise. Empty selects the
    /// family default.
    pub grid: Vec<f64>,
    /// Schemes evaluated by validation and trace runs. Empty selects the
    /// family default.
    pub schemes: Vec<SchemeParams>,
    pub simulate: bool,
    pub sim: SimSettings,
    pub tolerance: f64,
    pub compare: CompareGrid,
    pub trace: Option<ArrivalTrace>,
}

impl SweepSpec {
    pub fn new(family: Family, scenario: Scenario) -> Self {
        Self {
            family,
            scenario,
            grid: Vec::new(),
            schemes: Vec::new(),
            simulate: matches!(family, Family::Validation | Family::Trace),
            sim: SimSettings::default(),
            tolerance: DEFAULT_TOLERANCE,
            compare: CompareGrid::default(),
            trace: None,
        }
    }

    /// The reference single-item setup at `R_UL = R_DL = 1000 /s`.
    pub fn reference(family: Family) -> Self {
        let rates = ChannelRates { r_ul: 1000.0, r_dl: 1000.0 };
        let scenario = Scenario::from_rates(rates, vec![200.0]).expect("reference scenario is valid");
        Self::new(family, scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("grid", "values must be finite and >= 0"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid", "must be strictly increasing"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("tolerance", "must be >= 0"));
        }
        for scheme in &self.schemes {
            scheme.validate(self.scenario.item_count_s)?;
        }
        if self.family == Family::SchemeCompare
            && (self.compare.items.is_empty() || self.compare.popularity.is_empty() || self.compare.rates.is_empty())
        {
            return Err(Error::invalid("compare", "every comparison grid needs at least one entry"));
        }
        if self.family == Family::Trace && self.trace.is_none() {
            return Err(Error::invalid("trace", "the trace family needs an arrival trace"));
        }
        Ok(())
    }
}

/// Rows produced by one sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Table {
    Validation(Vec<ValidationRow>),
    Tradeoff(Vec<TradeoffRow>),
    Capacity(Vec<CapacityRow>),
    Compare(Vec<CompareRow>),
    Trace(Vec<TraceRow>),
}

impl Table {
    pub fn len(&self) -> usize {
        match self {
            Table::Validation(r) => r.len(),
            Table::Tradeoff(r) => r.len(),
            Table::Capacity(r) => r.len(),
            Table::Compare(r) => r.len(),
            Table::Trace(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        match self {
            Table::Validation(r) => write_csv(out, r),
            Table::Tradeoff(r) => write_csv(out, r),
            Table::Capacity(r) => write_csv(out, r),
            Table::Compare(r) => write_csv(out, r),
            Table::Trace(r) => write_csv(out, r),
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        match self {
            Table::Validation(r) => serde_json::to_writer_pretty(out, r)?,
            Table::Tradeoff(r) => serde_json::to_writer_pretty(out, r)?,
            Table::Capacity(r) => serde_json::to_writer_pretty(out, r)?,
            Table::Compare(r) => serde_json::to_writer_pretty(out, r)?,
            Table::Trace(r) => serde_json::to_writer_pretty(out, r)?,
        }
        Ok(())
    }

    /// Writes JSON for a `.json` path and CSV otherwise.
    pub fn write_path(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => self.write_json(&mut out)?,
            _ => self.write_csv(&mut out)?,
        }
        out.flush()?;
        Ok(())
    }
}

fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// Analytically unstable; not simulated.
    Overloaded,
    /// Simulation hit the divergence bound.
    Diverged,
    Infeasible,
}

impl Status {
    fn of(err: &Error) -> Self {
        if err.is_overload() {
            Status::Overloaded
        } else {
            Status::Infeasible
        }
    }
}

/// Per-item values, written as one `;`-separated field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemList(pub Vec<f64>);

impl Serialize for ItemList {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let text: Vec<String> = self.0.iter().map(|x| format!("{x:e}")).collect();
        s.serialize_str(&text.join(";"))
    }
}

/// Dispatches on `spec.family`.
pub fn run(spec: &SweepSpec) -> Result<Table> {
    spec.validate()?;
    Ok(match spec.family {
        Family::Validation => Table::Validation(run_validation(spec)?),
        Family::AoiLatencyTradeoff => Table::Tradeoff(run_aoi_latency_tradeoff(spec)?),
        Family::CapacityAoi => Table::Capacity(run_capacity_aoi(spec)?),
        Family::SchemeCompare => Table::Compare(run_scheme_compare(spec)?),
        Family::Trace => Table::Trace(run_trace(spec)?),
    })
}

/// Same popularity shape, total rate `total`.
pub fn with_total(scenario: &Scenario, total: f64) -> Scenario {
    let weights = scenario.request_prob();
    Scenario {
        item_count_s: scenario.item_count_s,
        lambda_s: weights.into_iter().map(|w| w * total).collect(),
        rates: scenario.rates,
    }
}

/// `n` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub lambda_total: f64,
    pub scheme: SchemeKind,
    /// `beta`, or the update ratio `P` for ReA.
    pub knob: f64,
    pub status: Status,
    pub analytic_latency: Option<f64>,
    pub analytic_aoi: Option<f64>,
    pub sim_latency: Option<f64>,
    pub sim_latency_ci95: Option<f64>,
    pub sim_aoi: Option<f64>,
    pub sim_aoi_ci95: Option<f64>,
    pub latency_rel_err: Option<f64>,
    pub aoi_rel_err: Option<f64>,
    pub latency_flag: bool,
    pub aoi_flag: bool,
    pub n_delivered: u64,
    /// Worst Little's-law gap over the scheme's queues.
    pub little_gap: Option<f64>,
}

/// Conventional `beta = 0.5`, RSUC `beta` in {0.2, 0.5, 0.8} and ReA
/// `p` in {0.5, 1}.
pub fn default_validation_schemes(items: usize) -> Vec<SchemeParams> {
    let mut out = vec![SchemeParams::Conventional { beta: 0.5 }];
    out.extend([0.2, 0.5, 0.8].map(|beta| SchemeParams::Rsuc { beta }));
    out.extend([0.5, 1.0].map(|p| SchemeParams::Rea {
        update_prob: vec![p; items],
    }));
    out
}

/// Whether `analytic` falls outside the simulated CI widened by `tol`.
pub fn disagrees(analytic: f64, sim: f64, ci: f64, tol: f64) -> bool {
    (analytic - sim).abs() > ci + tol * analytic.abs()
}

fn knob(scheme: &SchemeParams, scenario: &Scenario) -> f64 {
    match scheme {
        SchemeParams::Conventional { beta } | SchemeParams::Rsuc { beta } => *beta,
        SchemeParams::Rea { update_prob } => update_ratio(scenario, update_prob),
    }
}

pub fn run_validation(spec: &SweepSpec) -> Result<Vec<ValidationRow>> {
    let grid = if spec.grid.is_empty() { vec![100.0, 200.0, 300.0, 400.0] } else { spec.grid.clone() };
    let schemes = if spec.schemes.is_empty() {
        default_validation_schemes(spec.scenario.item_count_s)
    } else {
        spec.schemes.clone()
    };
    let points: Vec<(f64, &SchemeParams)> = grid
        .iter()
        .flat_map(|&l| schemes.iter().map(move |s| (l, s)))
        .collect();
    points
        .into_par_iter()
        .map(|(lambda, scheme)| validation_point(spec, lambda, scheme))
        .collect()
}

fn validation_point(spec: &SweepSpec, lambda: f64, scheme: &SchemeParams) -> Result<ValidationRow> {
    let scenario = with_total(&spec.scenario, lambda);
    let mut row = ValidationRow {
        lambda_total: lambda,
        scheme: scheme.kind(),
        knob: knob(scheme, &scenario),
        status: Status::Ok,
        analytic_latency: None,
        analytic_aoi: None,
        sim_latency: None,
        sim_latency_ci95: None,
        sim_aoi: None,
        sim_aoi_ci95: None,
        latency_rel_err: None,
        aoi_rel_err: None,
        latency_flag: false,
        aoi_flag: false,
        n_delivered: 0,
        little_gap: None,
    };
    let (lat, aoi) = match analytic::evaluate(&scenario, scheme) {
        Ok(v) => v,
        Err(e) if e.is_overload() || e.is_infeasible() => {
            row.status = Status::of(&e);
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    row.analytic_latency = Some(lat);
    row.analytic_aoi = Some(aoi);
    if !spec.simulate {
        return Ok(row);
    }
    let report = desim::simulate(&spec.sim.config(scenario, scheme.clone()))?;
    row.n_delivered = report.perf.n_delivered;
    if report.diverged.is_some() {
        row.status = Status::Diverged;
        return Ok(row);
    }
    let p = report.perf;
    let aoi_tol = if scheme.kind() == SchemeKind::Rea {
        spec.tolerance.max(REA_AOI_TOLERANCE)
    } else {
        spec.tolerance
    };
    row.sim_latency = Some(p.mean_latency);
    row.sim_latency_ci95 = Some(p.latency_ci95);
    row.sim_aoi = Some(p.mean_aoi);
    row.sim_aoi_ci95 = Some(p.aoi_ci95);
    row.latency_rel_err = Some((p.mean_latency - lat) / lat);
    row.aoi_rel_err = Some((p.mean_aoi - aoi) / aoi);
    row.latency_flag = disagrees(lat, p.mean_latency, p.latency_ci95, spec.tolerance);
    row.aoi_flag = disagrees(aoi, p.mean_aoi, p.aoi_ci95, aoi_tol);
    row.little_gap = report.little_gaps().into_iter().map(|(_, g)| g).reduce(f64::max);
    Ok(row)
}

// ---------------------------------------------------------------------------
// Trade-off curves

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub aoi_cap: f64,
    pub scheme: SchemeKind,
    pub status: Status,
    /// RSUC split `beta`.
    pub beta: Option<f64>,
    /// ReA update ratio `P`.
    pub update_ratio: Option<f64>,
    /// `1 - beta` or `1 - P`: the share left for content delivery.
    pub reserved_for_delivery: Option<f64>,
    pub latency: Option<f64>,
    /// Average AoI actually achieved (at most `aoi_cap`).
    pub aoi: Option<f64>,
}

/// Smallest AoI either scheme can reach on `scenario`.
fn joint_floor(scenario: &Scenario) -> f64 {
    let rsuc = theorem4_min_aoi(&scenario.rates, scenario.item_count_s);
    match p4_floor(&scenario.rates, scenario) {
        Ok(rea) => rsuc.min(rea),
        Err(_) => rsuc,
    }
}

/// 30 log-spaced caps from 1.05x to 100x of `floor`.
pub fn default_cap_grid(floor: f64) -> Vec<f64> {
    log_grid(1.05 * floor, 100.0 * floor, DEFAULT_CAP_POINTS)
}

fn cap_grid(spec: &SweepSpec, floor: f64) -> Vec<f64> {
    if spec.grid.is_empty() {
        default_cap_grid(floor)
    } else {
        spec.grid.clone()
    }
}

fn rsuc_tradeoff(scenario: &Scenario, cap: f64) -> Result<TradeoffRow> {
    let rates = &scenario.rates;
    let load = scenario.total_lambda();
    let mut row = TradeoffRow {
        aoi_cap: cap,
        scheme: SchemeKind::Rsuc,
        status: Status::Ok,
        beta: None,
        update_ratio: None,
        reserved_for_delivery: None,
        latency: None,
        aoi: None,
    };
    match p3_min_beta(rates, load, scenario.item_count_s, cap) {
        Ok(beta) => {
            row.beta = Some(beta);
            row.reserved_for_delivery = Some(1.0 - beta);
            row.latency = Some(rsuc_latency(rates, load, beta)?);
            row.aoi = Some(rsuc_aoi(rates, scenario.item_count_s, beta)?);
        }
        Err(e) if e.is_infeasible() || e.is_overload() => row.status = Status::of(&e),
        Err(e) => return Err(e),
    }
    Ok(row)
}

/// ReA row plus the per-item solution when feasible.
fn rea_tradeoff(scenario: &Scenario, cap: f64) -> Result<(TradeoffRow, Option<Vec<f64>>)> {
    let rates = &scenario.rates;
    let load = scenario.total_lambda();
    let mut row = TradeoffRow {
        aoi_cap: cap,
        scheme: SchemeKind::Rea,
        status: Status::Ok,
        beta: None,
        update_ratio: None,
        reserved_for_delivery: None,
        latency: None,
        aoi: None,
    };
    match p4_solve(rates, scenario, cap) {
        Ok(sol) => {
            row.update_ratio = Some(sol.update_ratio);
            row.reserved_for_delivery = Some(1.0 - sol.update_ratio);
            row.aoi = Some(analytic::rea_aoi_avg(rates, scenario, &sol.update_prob)?);
            if sol.is_stable(rates, load) {
                row.latency = Some(rea_latency(rates, load, sol.update_ratio)?);
            } else {
                row.status = Status::Overloaded;
            }
            Ok((row, Some(sol.update_prob)))
        }
        Err(e) if e.is_infeasible() || e.is_overload() => {
            row.status = Status::of(&e);
            Ok((row, None))
        }
        Err(e) => Err(e),
    }
}

pub fn run_aoi_latency_tradeoff(spec: &SweepSpec) -> Result<Vec<TradeoffRow>> {
    let scenario = &spec.scenario;
    let grid = cap_grid(spec, joint_floor(scenario));
    let mut rows = Vec::with_capacity(2 * grid.len());
    for &cap in &grid {
        rows.push(rsuc_tradeoff(scenario, cap)?);
    }
    for &cap in &grid {
        rows.push(rea_tradeoff(scenario, cap)?.0);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Capacity curves

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityRow {
    pub aoi_cap: f64,
    pub scheme: SchemeKind,
    pub status: Status,
    pub capacity: Option<f64>,
    /// `beta` at capacity for RSUC, `P` for ReA.
    pub knob: Option<f64>,
}

/// Largest total rate (same popularity shape) for which ReA meets `cap`
/// with a stable shared server. `None` if no rate in `(0, R_DL)` does.
pub fn rea_capacity_at_aoi(scenario: &Scenario, cap: f64) -> Result<Option<(f64, f64)>> {
    let rates = scenario.rates;
    let ok = |total: f64| -> Result<Option<f64>> {
        let sc = with_total(scenario, total);
        match p4_solve(&rates, &sc, cap) {
            Ok(sol) if sol.is_stable(&rates, total) => Ok(Some(sol.update_ratio)),
            Ok(_) => Ok(None),
            Err(e) if e.is_infeasible() || e.is_overload() => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut lo = rates.r_dl * 1e-9;
    let Some(mut knob) = ok(lo)? else {
        return Ok(None);
    };
    let mut hi = rates.r_dl;
    for _ in 0..200 {
        if hi - lo <= CAPACITY_REL_TOL * lo {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match ok(mid)? {
            Some(p) => {
                lo = mid;
                knob = p;
            }
            None => hi = mid,
        }
    }
    Ok(Some((lo, knob)))
}

pub fn run_capacity_aoi(spec: &SweepSpec) -> Result<Vec<CapacityRow>> {
    let scenario = &spec.scenario;
    let rates = &scenario.rates;
    let items = scenario.item_count_s;
    // Light-traffic ReA floor is the p = 1 corner.
    let floor = theorem4_min_aoi(rates, items).min(rates.r_ul.recip() + rates.r_dl.recip());
    let grid = cap_grid(spec, floor);
    let rsuc = grid.iter().map(|&cap| match rsuc_capacity_at_aoi(rates, items, cap) {
        Ok(c) => Ok(CapacityRow {
            aoi_cap: cap,
            scheme: SchemeKind::Rsuc,
            status: Status::Ok,
            capacity: Some(c),
            knob: Some(1.0 - c / rates.r_dl),
        }),
        Err(e) if e.is_infeasible() => Ok(CapacityRow {
            aoi_cap: cap,
            scheme: SchemeKind::Rsuc,
            status: Status::Infeasible,
            capacity: None,
            knob: None,
        }),
        Err(e) => Err(e),
    });
    let rea: Vec<Result<CapacityRow>> = grid
        .par_iter()
        .map(|&cap| {
            let found = rea_capacity_at_aoi(scenario, cap)?;
            Ok(CapacityRow {
                aoi_cap: cap,
                scheme: SchemeKind::Rea,
                status: if found.is_some() { Status::Ok } else { Status::Infeasible },
                capacity: found.map(|f| f.0),
                knob: found.map(|f| f.1),
            })
        })
        .collect();
    rsuc.chain(rea).collect()
}

// ---------------------------------------------------------------------------
// Scheme comparison

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub items: usize,
    pub popularity: String,
    pub r_ul: f64,
    pub r_dl: f64,
    pub lambda_total: f64,
    pub aoi_cap: f64,
    pub scheme: SchemeKind,
    pub status: Status,
    /// `beta` for RSUC, `P` for ReA.
    pub knob: Option<f64>,
    pub latency: Option<f64>,
    pub aoi: Option<f64>,
    /// ReA per-item update probabilities.
    pub item_update_prob: ItemList,
    /// ReA per-item average AoI.
    pub item_aoi: ItemList,
}

pub fn run_scheme_compare(spec: &SweepSpec) -> Result<Vec<CompareRow>> {
    let total = spec.scenario.total_lambda();
    let mut configs = Vec::new();
    for &items in &spec.compare.items {
        for pop in &spec.compare.popularity {
            for &rates in &spec.compare.rates {
                configs.push((items, pop, rates));
            }
        }
    }
    let tables: Vec<Result<Vec<CompareRow>>> = configs
        .into_par_iter()
        .map(|(items, pop, rates)| {
            let scenario = Scenario::from_popularity(rates, total, pop, items)?;
            let grid = cap_grid(spec, joint_floor(&scenario));
            let base = |cap: f64, t: &TradeoffRow| CompareRow {
                items,
                popularity: pop.to_string(),
                r_ul: rates.r_ul,
                r_dl: rates.r_dl,
                lambda_total: total,
                aoi_cap: cap,
                scheme: t.scheme,
                status: t.status,
                knob: t.beta.or(t.update_ratio),
                latency: t.latency,
                aoi: t.aoi,
                item_update_prob: ItemList::default(),
                item_aoi: ItemList::default(),
            };
            let mut rows = Vec::with_capacity(2 * grid.len());
            for &cap in &grid {
                rows.push(base(cap, &rsuc_tradeoff(&scenario, cap)?));
            }
            for &cap in &grid {
                let (t, probs) = rea_tradeoff(&scenario, cap)?;
                let mut row = base(cap, &t);
                if let Some(p) = probs {
                    let aoi = scenario
                        .lambda_s
                        .iter()
                        .zip(&p)
                        .map(|(&l, &q)| analytic::rea_aoi_item(&rates, l, q))
                        .collect::<Result<Vec<_>>>()?;
                    row.item_update_prob = ItemList(p);
                    row.item_aoi = ItemList(aoi);
                }
                rows.push(row);
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for t in tables {
        out.extend(t?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Trace-driven runs

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub scheme: SchemeKind,
    pub knob: f64,
    /// Bucket index; empty for the whole-run summary row.
    pub bucket: Option<usize>,
    pub start: f64,
    pub end: f64,
    /// Trace rate at the start of the bucket; mean rate for the summary.
    pub lambda_total: f64,
    pub status: Status,
    pub n_delivered: u64,
    pub mean_latency: f64,
    pub mean_aoi: f64,
    /// Across-replication half-widths; summary rows only.
    pub latency_ci95: Option<f64>,
    pub aoi_ci95: Option<f64>,
}

/// Conventional at its latency-optimal split for `load`, RSUC `beta = 0.2`
/// and ReA `p = 1`.
pub fn default_trace_schemes(scenario: &Scenario, load: f64) -> Result<Vec<SchemeParams>> {
    let beta = p1_opt_beta(&scenario.rates, load)?;
    Ok(vec![
        SchemeParams::Conventional { beta },
        SchemeParams::Rsuc { beta: 0.2 },
        SchemeParams::Rea {
            update_prob: vec![1.0; scenario.item_count_s],
        },
    ])
}

fn trace_horizon(trace: &ArrivalTrace, duration: Option<f64>) -> Result<f64> {
    if let Some(d) = duration {
        return Ok(d);
    }
    match trace.segments() {
        [.., (start, rate)] if *rate == 0.0 && *start > 0.0 => Ok(*start),
        _ => Err(Error::invalid(
            "duration",
            "trace runs need a duration unless the trace ends with a zero-rate segment",
        )),
    }
}

/// Time-averaged rate of `trace` over `[0, horizon)`.
fn mean_rate(trace: &ArrivalTrace, horizon: f64) -> f64 {
    trace
        .buckets(horizon)
        .iter()
        .map(|&(s, e)| trace.rate_at(s) * (e - s))
        .sum::<f64>()
        / horizon
}

pub fn run_trace(spec: &SweepSpec) -> Result<Vec<TraceRow>> {
    let trace = spec
        .trace
        .as_ref()
        .ok_or_else(|| Error::invalid("trace", "the trace family needs an arrival trace"))?;
    let horizon = trace_horizon(trace, spec.sim.duration)?;
    let buckets = trace.buckets(horizon);
    let load = mean_rate(trace, horizon);
    let schemes = if spec.schemes.is_empty() {
        default_trace_schemes(&spec.scenario, load)?
    } else {
        spec.schemes.clone()
    };
    let mut rows = Vec::new();
    for scheme in &schemes {
        rows.extend(trace_scheme(spec, trace, horizon, &buckets, load, scheme)?);
    }
    Ok(rows)
}

fn trace_scheme(
    spec: &SweepSpec,
    trace: &ArrivalTrace,
    horizon: f64,
    buckets: &[(f64, f64)],
    load: f64,
    scheme: &SchemeParams,
) -> Result<Vec<TraceRow>> {
    // The scenario's shape drives item choice; the trace drives arrivals.
    let scenario = with_total(&spec.scenario, load.max(f64::MIN_POSITIVE));
    let mut cfg = spec.sim.config(scenario.clone(), scheme.clone());
    cfg.stop = Stop::Duration(horizon);
    cfg.trace = Some(trace.clone());
    cfg.validate()?;

    let per_rep: Vec<Result<(desim::ReplicationStats, Vec<(Moments, Moments)>)>> = (0..u64::from(cfg.replications))
        .into_par_iter()
        .map(|rep| {
            let mut acc = vec![(Moments::default(), Moments::default()); buckets.len()];
            let mut sink = |r: &desim::DeliveryRecord| {
                let b = buckets.partition_point(|&(s, _)| s <= r.arrival_time).saturating_sub(1);
                acc[b].0.push(r.latency());
                acc[b].1.push(r.aoi());
            };
            let stats = desim::simulate_replication(&cfg, rep, Some(&mut sink))?;
            Ok((stats, acc))
        })
        .collect();

    let mut reps = Vec::with_capacity(per_rep.len());
    let mut pooled = vec![(Moments::default(), Moments::default()); buckets.len()];
    for r in per_rep {
        let (stats, acc) = r?;
        for (p, a) in pooled.iter_mut().zip(&acc) {
            p.0.merge(&a.0);
            p.1.merge(&a.1);
        }
        reps.push(stats);
    }
    let report = SimReport::from_replications(reps);
    let status = if report.diverged.is_some() { Status::Diverged } else { Status::Ok };
    let k = knob(scheme, &scenario);

    let mut rows: Vec<TraceRow> = buckets
        .iter()
        .zip(&pooled)
        .enumerate()
        .map(|(i, (&(start, end), (lat, aoi)))| TraceRow {
            scheme: scheme.kind(),
            knob: k,
            bucket: Some(i),
            start,
            end,
            lambda_total: trace.rate_at(start),
            status,
            n_delivered: lat.count,
            mean_latency: lat.mean(),
            mean_aoi: aoi.mean(),
            latency_ci95: None,
            aoi_ci95: None,
        })
        .collect();
    rows.push(TraceRow {
        scheme: scheme.kind(),
        knob: k,
        bucket: None,
        start: 0.0,
        end: horizon,
        lambda_total: load,
        status,
        n_delivered: report.perf.n_delivered,
        mean_latency: report.perf.mean_latency,
        mean_aoi: report.perf.mean_aoi,
        latency_ci95: Some(report.perf.latency_ci95),
        aoi_ci95: Some(report.perf.aoi_ci95),
    });
    Ok(rows)
}

/// Capacity of `scheme` at its own knob, for overload probes.
pub fn scheme_capacity(scenario: &Scenario, scheme: &SchemeParams) -> Result<f64> {
    let rates = &scenario.rates;
    match scheme {
        SchemeParams::Conventional { beta } => Ok(rates.uplink(*beta).min(rates.downlink(*beta))),
        SchemeParams::Rsuc { beta } => Ok(rates.downlink(*beta)),
        SchemeParams::Rea { update_prob } => rea_capacity(rates, update_ratio(scenario, update_prob)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in [
            Family::Validation,
            Family::AoiLatencyTradeoff,
            Family::CapacityAoi,
            Family::SchemeCompare,
            Family::Trace,
        ] {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert_eq!("capacity-aoi".parse::<Family>().unwrap(), Family::CapacityAoi);
        assert!("bogus".parse::<Family>().is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1.0, 100.0, 3);
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 10.0).abs() < 1e-9 && (g[2] - 100.0).abs() < 1e-9);
        assert_eq!(default_cap_grid(2.0).len(), 30);
    }

    #[test]
    fn unsorted_grid_rejected() {
        let mut spec = SweepSpec::reference(Family::Validation);
        spec.grid = vec![200.0, 100.0];
        assert!(run(&spec).is_err());
    }

    #[test]
    fn disagreement_rule() {
        assert!(!disagrees(1.0, 1.02, 0.0, 0.03));
        assert!(disagrees(1.0, 1.05, 0.01, 0.03));
        assert!(!disagrees(1.0, 1.05, 0.03, 0.03));
    }

    #[test]
    fn analytic_validation_marks_overload() {
        let mut spec = SweepSpec::reference(Family::Validation);
        spec.simulate = false;
        let rows = run_validation(&spec).unwrap();
        assert_eq!(rows.len(), 24);
        let rsuc08: Vec<_> = rows
            .iter()
            .filter(|r| r.scheme == SchemeKind::Rsuc && (r.knob - 0.8).abs() < 1e-12)
            .collect();
        assert_eq!(rsuc08[0].status, Status::Ok);
        assert!(rsuc08[1..].iter().all(|r| r.status == Status::Overloaded));
    }

    #[test]
    fn rsuc_capacity_at_floor() {
        let mut spec = SweepSpec::reference(Family::CapacityAoi);
        let floor = theorem4_min_aoi(&spec.scenario.rates, 1);
        spec.grid = vec![floor];
        let rows = run_capacity_aoi(&spec).unwrap();
        let c = rows[0].capacity.unwrap();
        assert!((c - 414.2135623730951).abs() < 1e-6, "{c}");
    }

    #[test]
    fn csv_and_json_mirror() {
        let mut spec = SweepSpec::reference(Family::AoiLatencyTradeoff);
        spec.grid = vec![0.01, 0.02];
        let table = run(&spec).unwrap();
        let mut csv_out = Vec::new();
        table.write_csv(&mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert!(text.starts_with("aoi_cap,scheme,status,beta,update_ratio,reserved_for_delivery,latency,aoi\n"));
        assert_eq!(text.lines().count(), 5);
        let mut json_out = Vec::new();
        table.write_json(&mut json_out).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json_out).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 4);
        assert_eq!(v[0]["scheme"], "rsuc");
    }

    #[test]
    fn item_list_field() {
        let s = serde_json::to_string(&ItemList(vec![0.5, 0.25])).unwrap();
        assert_eq!(s, "\"5e-1;2.5e-1\"");
    }
}
