mod args;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use rsu_freshness::analytic::{
    conv_aoi_at_beta, conv_capacity, conv_latency, rea_aoi_avg, rea_capacity, rea_latency, rsuc_aoi, rsuc_latency,
};
use rsu_freshness::config::{Problem, RunConfig};
use rsu_freshness::desim::{self, ArrivalTrace, RecordWriter};
use rsu_freshness::experiments::{self, CompareGrid, Family, SimSettings, SweepSpec, Table as SweepTable};
use rsu_freshness::optimize::{p1_opt_beta, p2_solve, p3_min_beta, p4_solve, P2Config};
use rsu_freshness::model::update_ratio;
use rsu_freshness::{ChannelRates, Error, SchemeKind, SchemeParams};

use args::{AnalyticArgs, Cli, Command, Metric, ModelArgs, OptimizeArgs, SimulateArgs, SweepArgs};
use output::{Cell, Table};

/// Process exit status for each failure class.
mod status {
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INFEASIBLE: u8 = 3;
    pub const OVERLOAD: u8 = 4;
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io(io::Error),
    /// Simulation stopped at the divergence bound; results were printed.
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Config(_) | Error::InvalidParameter { .. } | Error::DegenerateSplit { .. }) => {
                status::USAGE
            }
            Failure::Lib(e) if e.is_infeasible() => status::INFEASIBLE,
            Failure::Lib(e) if e.is_overload() => status::OVERLOAD,
            Failure::Diverged(_) => status::OVERLOAD,
            _ => status::OTHER,
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analytic(a) => analytic(a),
        Command::Simulate(a) => simulate(a),
        Command::Optimize(a) => optimize(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::Io(e) => eprintln!("error: {e}"),
                Failure::Diverged(msg) => eprintln!("overload: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load(model: &ModelArgs, extra: RunConfig) -> Result<RunConfig, Error> {
    let base = match &model.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut flags = model.overrides();
    flags.sim = extra.sim;
    flags.optimize = extra.optimize;
    flags.sweep = extra.sweep;
    Ok(base.overlay(flags))
}

fn emit(table: &Table, out: &args::OutputArgs) -> Outcome {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    table.write(&mut lock, out.format, out.digits)?;
    lock.flush()?;
    Ok(())
}

fn item_count(cfg: &RunConfig) -> Result<usize, Error> {
    cfg.items
        .or_else(|| cfg.lambda_list.as_ref().map(Vec::len))
        .ok_or_else(|| Error::Config("missing required key `items`".into()))
}

fn beta_of(cfg: &RunConfig) -> Option<f64> {
    cfg.scheme.as_ref().and_then(|s| s.beta)
}

fn require_beta(cfg: &RunConfig) -> Result<f64, Error> {
    beta_of(cfg).ok_or_else(|| Error::Config("missing required key `scheme.beta`".into()))
}

fn analytic(a: &AnalyticArgs) -> Outcome {
    let cfg = load(&a.model, RunConfig::default())?;
    let kind = cfg.scheme_kind()?;
    let want = |m: Metric| a.metric == m || a.metric == Metric::All;
    let mut cells: Vec<(&'static str, Cell)> = vec![("scheme", kind.to_string().into())];
    match kind {
        SchemeKind::Conventional => {
            let rates = cfg.rates()?;
            let need_load = want(Metric::Latency) || want(Metric::Aoi) || beta_of(&cfg).is_none();
            let load = if need_load { Some(cfg.scenario()?.total_lambda()) } else { None };
            let beta = match beta_of(&cfg) {
                Some(b) => b,
                None => p1_opt_beta(&rates, load.unwrap_or(0.0))?,
            };
            cells.push(("beta", beta.into()));
            if want(Metric::Latency) {
                cells.push(("latency", conv_latency(&rates, load.unwrap_or(0.0), beta)?.into()));
            }
            if want(Metric::Aoi) {
                cells.push(("aoi", conv_aoi_at_beta(&rates, load.unwrap_or(0.0), beta)?.into()));
            }
            if want(Metric::Capacity) {
                cells.push(("capacity", conv_capacity(&rates).into()));
            }
        }
        SchemeKind::Rsuc => {
            let rates = cfg.rates()?;
            let beta = require_beta(&cfg)?;
            cells.push(("beta", beta.into()));
            if want(Metric::Latency) {
                let load = cfg.scenario()?.total_lambda();
                cells.push(("latency", rsuc_latency(&rates, load, beta)?.into()));
            }
            if want(Metric::Aoi) {
                cells.push(("aoi", rsuc_aoi(&rates, item_count(&cfg)?, beta)?.into()));
            }
            if want(Metric::Capacity) {
                cells.push(("capacity", rates.downlink(beta).into()));
            }
        }
        SchemeKind::Rea => {
            let scenario = cfg.scenario()?;
            let rates = scenario.rates;
            let SchemeParams::Rea { update_prob } = cfg.scheme(scenario.item_count_s)? else {
                unreachable!("scheme kind checked above")
            };
            let p = update_ratio(&scenario, &update_prob);
            cells.push(("update_ratio", p.into()));
            if want(Metric::Latency) {
                cells.push(("latency", rea_latency(&rates, scenario.total_lambda(), p)?.into()));
            }
            if want(Metric::Aoi) {
                cells.push(("aoi", rea_aoi_avg(&rates, &scenario, &update_prob)?.into()));
            }
            if want(Metric::Capacity) {
                cells.push(("capacity", rea_capacity(&rates, p)?.into()));
            }
        }
    }
    emit(&Table::one(cells), &a.output)
}

fn knob_cell(scheme: &SchemeParams, scenario: &rsu_freshness::Scenario) -> (&'static str, Cell) {
    match scheme {
        SchemeParams::Conventional { beta } | SchemeParams::Rsuc { beta } => ("beta", (*beta).into()),
        SchemeParams::Rea { update_prob } => ("update_ratio", update_ratio(scenario, update_prob).into()),
    }
}

fn simulate(a: &SimulateArgs) -> Outcome {
    let extra = RunConfig {
        sim: Some(a.sim.block()),
        ..RunConfig::default()
    };
    let cfg = load(&a.model, extra)?;
    let sim = cfg.sim_config()?;
    let report = match cfg.sim_block().records {
        Some(path) => {
            let file = BufWriter::new(File::create(&path)?);
            let mut writer = RecordWriter::new(file)?;
            let mut failed = None;
            let report = desim::simulate_with_records(&sim, &mut |r| {
                if failed.is_none() {
                    failed = writer.write(r).err();
                }
            })?;
            if let Some(e) = failed {
                return Err(e.into());
            }
            writer.finish()?.flush()?;
            report
        }
        None => desim::simulate(&sim)?,
    };
    let p = report.perf;
    let table = Table::one(vec![
        ("scheme", sim.scheme.kind().to_string().into()),
        knob_cell(&sim.scheme, &sim.scenario),
        ("mean_latency", p.mean_latency.into()),
        ("latency_ci95", p.latency_ci95.into()),
        ("mean_aoi", p.mean_aoi.into()),
        ("aoi_ci95", p.aoi_ci95.into()),
        ("n_delivered", p.n_delivered.into()),
        ("replications", (sim.replications as u64).into()),
        ("seed", sim.rng_seed.into()),
    ]);
    emit(&table, &a.output)?;
    match report.diverged {
        Some(d) => Err(Failure::Diverged(format!(
            "{} queue exceeded {} waiting jobs at t = {} s; statistics above are partial",
            d.queue, sim.divergence_bound, d.time
        ))),
        None => Ok(()),
    }
}

fn optimize(a: &OptimizeArgs) -> Outcome {
    let extra = RunConfig {
        optimize: Some(a.block()),
        ..RunConfig::default()
    };
    let cfg = load(&a.model, extra)?;
    let opt = cfg.optimize_block();
    let problem = opt
        .problem
        .ok_or_else(|| Error::Config("missing required key `optimize.problem`".into()))?;
    let cap = || {
        opt.aoi_cap
            .ok_or_else(|| Error::Config("missing required key `optimize.aoi_cap`".into()))
    };
    let scenario = cfg.scenario()?;
    let rates: ChannelRates = scenario.rates;
    let load = scenario.total_lambda();
    let items = scenario.item_count_s;
    let cells: Vec<(&'static str, Cell)> = match problem {
        Problem::P1 => {
            let beta = p1_opt_beta(&rates, load)?;
            vec![
                ("problem", "p1".into()),
                ("beta", beta.into()),
                ("latency", conv_latency(&rates, load, beta)?.into()),
                ("aoi", conv_aoi_at_beta(&rates, load, beta)?.into()),
            ]
        }
        Problem::P2 => {
            let weight = opt
                .weight_aoi
                .ok_or_else(|| Error::Config("missing required key `optimize.weight_aoi`".into()))?;
            let mut p2 = P2Config::new(weight);
            if let Some(t) = opt.tol {
                p2.tol = t;
            }
            if let Some(m) = opt.max_iter {
                p2.max_iter = m;
            }
            let sol = p2_solve(&rates, load, items, &p2)?;
            vec![
                ("problem", "p2".into()),
                ("beta", sol.beta.into()),
                ("residual", sol.residual.into()),
                ("iterations", sol.iterations.into()),
                ("boundary", sol.boundary.into()),
                ("latency", rsuc_latency(&rates, load, sol.beta)?.into()),
                ("aoi", rsuc_aoi(&rates, items, sol.beta)?.into()),
            ]
        }
        Problem::P3 => {
            let beta = p3_min_beta(&rates, load, items, cap()?)?;
            vec![
                ("problem", "p3".into()),
                ("beta", beta.into()),
                ("latency", rsuc_latency(&rates, load, beta)?.into()),
                ("aoi", rsuc_aoi(&rates, items, beta)?.into()),
            ]
        }
        Problem::P4 => {
            let sol = p4_solve(&rates, &scenario, cap()?)?;
            let stable = sol.is_stable(&rates, load);
            let latency = if stable { Some(rea_latency(&rates, load, sol.update_ratio)?) } else { None };
            let clamped: Vec<String> = sol.clamped.iter().map(usize::to_string).collect();
            vec![
                ("problem", "p4".into()),
                ("update_prob", sol.update_prob.clone().into()),
                ("update_ratio", sol.update_ratio.into()),
                ("clamped", clamped.join(",").into()),
                ("iterations", sol.iterations.into()),
                ("y", sol.y.into()),
                ("residual", sol.residual.into()),
                ("stable", stable.into()),
                ("latency", latency.into()),
                ("aoi", rea_aoi_avg(&rates, &scenario, &sol.update_prob)?.into()),
            ]
        }
    };
    emit(&Table::one(cells), &a.output)
}

fn sweep(a: &SweepArgs) -> Outcome {
    if let Some(n) = a.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    }
    let extra = RunConfig {
        sim: Some(a.sim.block()),
        sweep: Some(a.block()),
        ..RunConfig::default()
    };
    let cfg = load(&a.model, extra)?;
    let block = cfg.sweep_block();
    let family: Family = block
        .family
        .as_deref()
        .ok_or_else(|| Error::Config("missing required key `sweep.family`".into()))?
        .parse()?;
    let scenario = cfg.scenario()?;
    let mut spec = SweepSpec::new(family, scenario.clone());
    if let Some(g) = block.grid {
        spec.grid = g;
    }
    spec.schemes = match block.schemes {
        Some(s) => s,
        None if cfg.scheme.is_some() => vec![cfg.scheme(scenario.item_count_s)?],
        None => Vec::new(),
    };
    if let Some(s) = block.simulate {
        spec.simulate = s;
    }
    if let Some(t) = block.tolerance {
        spec.tolerance = t;
    }
    let defaults = CompareGrid::default();
    spec.compare = CompareGrid {
        items: block.items_grid.unwrap_or(defaults.items),
        popularity: block.popularity_grid.unwrap_or(defaults.popularity),
        rates: match block.rates_grid {
            Some(pairs) => pairs
                .iter()
                .map(|&[u, d]| ChannelRates::new(u, d))
                .collect::<Result<_, _>>()?,
            None => defaults.rates,
        },
    };
    let sim = cfg.sim_block();
    let mut settings = SimSettings::default();
    if let Some(s) = sim.seed {
        settings.seed = s;
    }
    if let Some(n) = sim.requests {
        settings.requests = n;
    }
    if let Some(r) = sim.replications {
        settings.replications = r;
    }
    if let Some(f) = sim.warmup_fraction {
        settings.warmup_fraction = f;
    }
    if let Some(b) = sim.divergence_bound {
        settings.divergence_bound = b;
    }
    settings.duration = sim.duration;
    spec.sim = settings;
    if let Some(path) = &sim.trace {
        let file = File::open(path)
            .map_err(|e| Error::Config(format!("cannot read trace {}: {e}", path.display())))?;
        spec.trace = Some(ArrivalTrace::from_csv(file)?);
    }

    let table = experiments::run(&spec)?;
    match &block.output {
        Some(path) => {
            table.write_path(path)?;
            eprintln!("wrote {} rows to {}", table.len(), path.display());
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            table.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    if let SweepTable::Validation(rows) = &table {
        let flagged = rows.iter().filter(|r| r.latency_flag || r.aoi_flag).count();
        let simulated = rows.iter().filter(|r| r.sim_latency.is_some()).count();
        if simulated > 0 {
            eprintln!("{flagged} of {simulated} simulated points disagree with the closed forms");
        }
    }
    Ok(())
}
