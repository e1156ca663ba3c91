//! Single-replication event loop for the three schemes.

use std::collections::VecDeque;

use rand::Rng;

use super::arrivals::ArrivalTrace;
use super::cache::CacheState;
use super::events::EventQueue;
use super::record::DeliveryRecord;
use super::rng::{draw_exponential, open_unit, ItemSampler, Streams};
use super::stats::{Divergence, Moments, ReplicationStats, Station};
use super::{ServiceDist, SimConfig, Stop, Warmup};
use crate::error::Queue;
use crate::model::SchemeParams;

#[derive(Debug, Clone, Copy)]
enum Ev {
    Arrival,
    UplinkDone,
    DownlinkDone,
    UpdateDone,
    FetchDone,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    item: usize,
    arrival: f64,
    generation: f64,
    /// Arrival at the current station (downlink of the tandem).
    station_arrival: f64,
    delivery_start: f64,
    measured: bool,
}

enum Scheme<'a> {
    Conventional,
    Rsuc,
    Rea(&'a [f64]),
}

enum Arrivals<'a> {
    Poisson(f64),
    Trace(&'a ArrivalTrace),
}

pub(crate) type Sink<'s> = Option<&'s mut dyn FnMut(&DeliveryRecord)>;

struct Sim<'a, 's> {
    cfg: &'a SimConfig,
    scheme: Scheme<'a>,
    arrivals: Arrivals<'a>,
    sampler: ItemSampler,
    rng: Streams,
    events: EventQueue<Ev>,
    cache: CacheState,
    up_mean: f64,
    dn_mean: f64,

    warmup_count: u64,
    warmup_time: f64,
    measure_count: Option<u64>,
    horizon: f64,
    issued: u64,
    measured_issued: u64,
    arrivals_open: bool,
    in_system: u64,

    up_queue: VecDeque<Job>,
    up_busy: Option<Job>,
    dn_queue: VecDeque<Job>,
    dn_busy: Option<Job>,

    updater_item: usize,
    updater_generation: f64,
    last_install: Vec<Option<f64>>,
    since_update: Vec<u64>,
    seen_update: Vec<bool>,

    stats: ReplicationStats,
    sink: Sink<'s>,
}

pub(crate) fn run(cfg: &SimConfig, replication: u64, sink: Sink<'_>) -> ReplicationStats {
    let items = cfg.scenario.item_count_s;
    let rates = cfg.scenario.rates;
    let (scheme, up_mean, dn_mean) = match &cfg.scheme {
        SchemeParams::Conventional { beta } => (
            Scheme::Conventional,
            rates.uplink(*beta).recip(),
            rates.downlink(*beta).recip(),
        ),
        SchemeParams::Rsuc { beta } => (
            Scheme::Rsuc,
            rates.uplink(*beta).recip(),
            rates.downlink(*beta).recip(),
        ),
        SchemeParams::Rea { update_prob } => (
            Scheme::Rea(update_prob.as_slice()),
            rates.r_ul.recip(),
            rates.r_dl.recip(),
        ),
    };
    let stations = match scheme {
        Scheme::Conventional => vec![
            Station::new("uplink"),
            Station::new("downlink"),
            Station::new("end_to_end"),
        ],
        Scheme::Rsuc => vec![Station::new("downlink")],
        Scheme::Rea(_) => vec![Station::new("shared")],
    };
    let (warmup_count, warmup_time, measure_count, horizon) = match (cfg.warmup, cfg.stop) {
        (Warmup::Fraction(f), Stop::Requests(n)) => ((f * n as f64).round() as u64, 0.0, Some(n), f64::INFINITY),
        (Warmup::Duration(d), Stop::Requests(n)) => (0, d, Some(n), f64::INFINITY),
        (Warmup::Fraction(f), Stop::Duration(t)) => (0, f * t, None, t),
        (Warmup::Duration(d), Stop::Duration(t)) => (0, d, None, t),
    };
    let arrivals = match &cfg.trace {
        Some(trace) => Arrivals::Trace(trace),
        None => Arrivals::Poisson(cfg.scenario.total_lambda()),
    };

    let mut sim = Sim {
        cfg,
        scheme,
        arrivals,
        sampler: ItemSampler::new(&cfg.scenario.request_prob()),
        rng: Streams::new(cfg.rng_seed, replication),
        events: EventQueue::new(),
        cache: CacheState::fresh(items),
        up_mean,
        dn_mean,
        warmup_count,
        warmup_time,
        measure_count,
        horizon,
        issued: 0,
        measured_issued: 0,
        arrivals_open: true,
        in_system: 0,
        up_queue: VecDeque::new(),
        up_busy: None,
        dn_queue: VecDeque::new(),
        dn_busy: None,
        updater_item: 0,
        updater_generation: 0.0,
        last_install: vec![None; items],
        since_update: vec![0; items],
        seen_update: vec![false; items],
        stats: ReplicationStats {
            replication,
            item_latency: vec![Moments::default(); items],
            item_aoi: vec![Moments::default(); items],
            stations,
            requests_between_updates: vec![Moments::default(); items],
            ..ReplicationStats::default()
        },
        sink,
    };
    sim.run();
    sim.stats
}

impl Sim<'_, '_> {
    fn run(&mut self) {
        if self.warmup_count == 0 && self.warmup_time <= 0.0 {
            self.open_window(0.0);
        }
        if self.horizon.is_finite() {
            let h = self.horizon;
            self.stats.stations.iter_mut().for_each(|s| s.close(h));
        }
        self.schedule_next_arrival(0.0);
        if matches!(self.scheme, Scheme::Rsuc) {
            self.start_update(0.0);
        }

        while let Some((now, ev)) = self.events.pop() {
            match ev {
                Ev::Arrival => self.on_arrival(now),
                Ev::UplinkDone => self.on_uplink_done(now),
                Ev::DownlinkDone => self.on_downlink_done(now),
                Ev::UpdateDone => self.on_update_done(now),
                Ev::FetchDone => self.on_fetch_done(now),
            }
            if self.stats.diverged.is_some() {
                break;
            }
            if !self.arrivals_open && self.in_system == 0 {
                break;
            }
        }
        self.stats.end_time = self.events.now();
    }

    fn open_window(&mut self, t: f64) {
        self.stats.stations.iter_mut().for_each(|s| s.open(t));
    }

    fn window_open(&self) -> bool {
        self.stats.stations[0].is_open()
    }

    fn schedule_next_arrival(&mut self, now: f64) {
        let next = match self.arrivals {
            Arrivals::Poisson(rate) if rate > 0.0 => Some(now + draw_exponential(&mut self.rng.arrival, rate.recip())),
            Arrivals::Poisson(_) => None,
            Arrivals::Trace(trace) => trace.advance(now, -open_unit(&mut self.rng.arrival).ln()),
        };
        match next {
            Some(t) if t <= self.horizon => self.events.schedule(t, Ev::Arrival),
            _ => self.end_arrivals(now),
        }
    }

    fn end_arrivals(&mut self, now: f64) {
        self.arrivals_open = false;
        if !self.horizon.is_finite() {
            self.stats.stations.iter_mut().for_each(|s| s.close(now));
        }
    }

    fn on_arrival(&mut self, now: f64) {
        let idx = self.issued;
        self.issued += 1;
        let measured = if self.measure_count.is_some() && self.warmup_time <= 0.0 {
            idx >= self.warmup_count
        } else {
            now >= self.warmup_time
        };
        if measured {
            if !self.window_open() {
                self.open_window(now);
            }
            self.measured_issued += 1;
        }
        let item = self.sampler.sample(&mut self.rng.item);
        let job = Job {
            item,
            arrival: now,
            generation: f64::NAN,
            station_arrival: now,
            delivery_start: f64::NAN,
            measured,
        };
        self.in_system += 1;

        if self.measure_count.is_some_and(|n| self.measured_issued >= n) {
            self.end_arrivals(now);
        } else {
            self.schedule_next_arrival(now);
        }

        match self.scheme {
            Scheme::Conventional => {
                self.stats.stations[0].enter(now);
                self.stats.stations[2].enter(now);
                self.up_queue.push_back(job);
                if self.up_busy.is_none() {
                    self.start_uplink(now);
                }
                self.check_length(Queue::Uplink, self.up_queue.len(), now);
            }
            Scheme::Rsuc | Scheme::Rea(_) => {
                self.stats.stations[0].enter(now);
                self.dn_queue.push_back(job);
                if self.dn_busy.is_none() {
                    self.start_downlink(now);
                }
                let queue = if matches!(self.scheme, Scheme::Rsuc) { Queue::Downlink } else { Queue::Shared };
                self.check_length(queue, self.dn_queue.len(), now);
            }
        }
    }

    fn check_length(&mut self, queue: Queue, length: usize, now: f64) {
        if length > self.cfg.divergence_bound && self.stats.diverged.is_none() {
            self.stats.diverged = Some(Divergence { queue, time: now, length });
        }
    }

    fn start_uplink(&mut self, now: f64) {
        if let Some(mut job) = self.up_queue.pop_front() {
            // The publisher's fresh version starts transmitting now.
            job.generation = now;
            let dt = draw_service(self.cfg.service, &mut self.rng.uplink, self.up_mean);
            self.events.schedule(now + dt, Ev::UplinkDone);
            self.up_busy = Some(job);
        }
    }

    fn on_uplink_done(&mut self, now: f64) {
        let mut job = self.up_busy.take().expect("uplink completion without a job");
        self.stats.stations[0].leave(now, job.arrival);
        job.station_arrival = now;
        self.stats.stations[1].enter(now);
        self.dn_queue.push_back(job);
        if self.dn_busy.is_none() {
            self.start_downlink(now);
        }
        self.check_length(Queue::Downlink, self.dn_queue.len(), now);
        self.start_uplink(now);
    }

    fn start_downlink(&mut self, now: f64) {
        let Some(mut job) = self.dn_queue.pop_front() else {
            return;
        };
        match self.scheme {
            Scheme::Conventional => self.transmit(now, job),
            Scheme::Rsuc => {
                job.generation = self.cache.generation_time(job.item);
                self.transmit(now, job);
            }
            Scheme::Rea(update_prob) => {
                let s = job.item;
                self.since_update[s] += 1;
                let update = self.rng.decision.random::<f64>() < update_prob[s];
                if update {
                    if self.seen_update[s] && self.window_open() {
                        self.stats.requests_between_updates[s].push(self.since_update[s] as f64);
                    }
                    self.since_update[s] = 0;
                    self.seen_update[s] = true;
                    self.stats.updates += 1;
                    job.generation = now;
                    let dt = draw_service(self.cfg.service, &mut self.rng.uplink, self.up_mean);
                    self.events.schedule(now + dt, Ev::FetchDone);
                    self.dn_busy = Some(job);
                } else {
                    job.generation = self.cache.generation_time(s);
                    self.transmit(now, job);
                }
            }
        }
    }

    /// Starts the downlink transmission of `job` to the vehicle.
    fn transmit(&mut self, now: f64, mut job: Job) {
        job.delivery_start = now;
        let dt = draw_service(self.cfg.service, &mut self.rng.downlink, self.dn_mean);
        self.events.schedule(now + dt, Ev::DownlinkDone);
        self.dn_busy = Some(job);
    }

    fn on_fetch_done(&mut self, now: f64) {
        let job = self.dn_busy.take().expect("fetch completion without a job");
        self.cache.install(job.item, job.generation, now);
        self.transmit(now, job);
    }

    fn on_downlink_done(&mut self, now: f64) {
        let job = self.dn_busy.take().expect("downlink completion without a job");
        match self.scheme {
            Scheme::Conventional => {
                self.stats.stations[1].leave(now, job.station_arrival);
                self.stats.stations[2].leave(now, job.arrival);
            }
            _ => self.stats.stations[0].leave(now, job.arrival),
        }
        self.in_system -= 1;
        if job.measured {
            let record = DeliveryRecord {
                item: job.item,
                arrival_time: job.arrival,
                delivery_start: job.delivery_start,
                delivery_complete: now,
                content_generation_time: job.generation,
            };
            let (latency, aoi) = (record.latency(), record.aoi());
            self.stats.latency.push(latency);
            self.stats.aoi.push(aoi);
            self.stats.item_latency[job.item].push(latency);
            self.stats.item_aoi[job.item].push(aoi);
            if let Some(sink) = self.sink.as_mut() {
                sink(&record);
            }
        }
        self.start_downlink(now);
    }

    fn start_update(&mut self, now: f64) {
        self.updater_generation = now;
        let dt = draw_service(self.cfg.service, &mut self.rng.uplink, self.up_mean);
        self.events.schedule(now + dt, Ev::UpdateDone);
    }

    fn on_update_done(&mut self, now: f64) {
        let s = self.updater_item;
        self.cache.install(s, self.updater_generation, now);
        if let Some(prev) = self.last_install[s] {
            if self.window_open() {
                self.stats.update_interval.push(now - prev);
            }
        }
        self.last_install[s] = Some(now);
        self.stats.updates += 1;
        self.updater_item = (s + 1) % self.cache_len();
        self.start_update(now);
    }

    fn cache_len(&self) -> usize {
        self.last_install.len()
    }
}

#[inline]
fn draw_service<R: Rng + ?Sized>(dist: ServiceDist, rng: &mut R, mean: f64) -> f64 {
    match dist {
        ServiceDist::Exponential => draw_exponential(rng, mean),
        ServiceDist::Constant => mean,
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::model::{ChannelRates, Scenario, SchemeParams};

    fn cfg(scheme: SchemeParams<f64>, lambda: f64, items: usize, n: u64) -> SimConfig {
        let rates = ChannelRates::new(1000.0, 1000.0).unwrap();
        let scenario = Scenario::from_rates(rates, vec![lambda / items as f64; items]).unwrap();
        SimConfig::new(scenario, scheme).with_requests(n).with_replications(4)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b
    }

    #[test]
    fn conventional_matches_tandem() {
        let r = simulate(&cfg(SchemeParams::Conventional { beta: 0.5 }, 200.0, 1, 200_000)).unwrap();
        assert!(r.diverged.is_none());
        assert!(rel(r.perf.mean_latency, 2.0 / 300.0) < 0.03, "{:?}", r.perf);
        assert!(rel(r.perf.mean_aoi, 1.0 / 500.0 + 1.0 / 300.0) < 0.03, "{:?}", r.perf);
    }

    #[test]
    fn rsuc_aoi_is_flat_in_lambda() {
        for lambda in [100.0, 200.0, 300.0] {
            let r = simulate(&cfg(SchemeParams::Rsuc { beta: 0.5 }, lambda, 1, 200_000)).unwrap();
            assert!(rel(r.perf.mean_aoi, 6.0e-3) < 0.03, "{lambda}: {:?}", r.perf);
            assert!(rel(r.perf.mean_latency, 1.0 / (500.0 - lambda)) < 0.03, "{lambda}: {:?}", r.perf);
        }
    }

    #[test]
    fn rea_always_update() {
        let r = simulate(&cfg(SchemeParams::Rea { update_prob: vec![1.0] }, 200.0, 1, 200_000)).unwrap();
        assert!(rel(r.perf.mean_latency, 3.0e-3) < 0.03, "{:?}", r.perf);
        assert!(rel(r.perf.mean_aoi, 2.0e-3) < 0.03, "{:?}", r.perf);
    }

    #[test]
    fn records_respect_ordering() {
        let c = cfg(SchemeParams::Rea { update_prob: vec![0.3, 0.7] }, 300.0, 2, 20_000);
        let mut n = 0u64;
        let mut sink = |r: &DeliveryRecord| {
            assert!(r.arrival_time <= r.delivery_start && r.delivery_start <= r.delivery_complete);
            assert!(r.content_generation_time <= r.delivery_start);
            n += 1;
        };
        let stats = simulate_replication(&c, 0, Some(&mut sink)).unwrap();
        assert_eq!(n, 20_000);
        assert_eq!(stats.n_delivered(), 20_000);
    }

    #[test]
    fn identical_config_is_bit_identical() {
        let c = cfg(SchemeParams::Conventional { beta: 0.4 }, 250.0, 1, 20_000);
        let a = simulate(&c).unwrap().perf;
        let b = simulate(&c).unwrap().perf;
        assert_eq!(a.mean_latency.to_bits(), b.mean_latency.to_bits());
        assert_eq!(a.mean_aoi.to_bits(), b.mean_aoi.to_bits());
    }

    #[test]
    fn overload_is_diagnosed() {
        let mut c = cfg(SchemeParams::Rsuc { beta: 0.5 }, 600.0, 1, 200_000);
        c.divergence_bound = 1000;
        let r = simulate(&c).unwrap();
        let d = r.diverged.expect("should diverge");
        assert_eq!(d.queue, crate::error::Queue::Downlink);
    }

    #[test]
    fn constant_service_has_no_waiting_below_spacing() {
        let mut c = cfg(SchemeParams::Rea { update_prob: vec![0.0] }, 100.0, 1, 10_000);
        c.service = ServiceDist::Constant;
        let r = simulate(&c).unwrap();
        assert!(r.perf.mean_latency >= 1e-3 - 1e-15);
    }
}
