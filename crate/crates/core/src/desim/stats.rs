//! Per-replication accumulators and cross-replication summaries.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::Queue;

/// Sum / sum-of-squares accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }
}

/// Occupancy of one service station over the measurement window, for
/// checking `L = lambda W`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Station {
    pub name: &'static str,
    #[serde(skip)]
    in_system: u64,
    #[serde(skip)]
    last_change: f64,
    #[serde(skip)]
    window_start: Option<f64>,
    #[serde(skip)]
    window_end: Option<f64>,
    /// Integral of the number in system over the window.
    pub area: f64,
    /// Arrivals to this station inside the window.
    pub arrivals: u64,
    /// Summed sojourn of those arrivals.
    pub sojourn_sum: f64,
}

impl Station {
    pub fn new(name: &'static str) -> Self {
        Self {
            name,
            ..Self::default()
        }
    }

    fn accrue(&mut self, now: f64) {
        if let Some(start) = self.window_start {
            let a = self.last_change.max(start);
            let b = self.window_end.map_or(now, |end| now.min(end));
            if b > a {
                self.area += self.in_system as f64 * (b - a);
            }
        }
        self.last_change = now;
    }

    /// Starts the window at `t`. Occupancy is piecewise constant between
    /// changes, so the pending segment is clipped lazily on the next change.
    pub fn open(&mut self, t: f64) {
        self.window_start = Some(t);
    }

    pub fn close(&mut self, t: f64) {
        self.window_end = Some(t);
    }

    pub fn is_open(&self) -> bool {
        self.window_start.is_some()
    }

    pub fn in_window(&self, t: f64) -> bool {
        self.window_start.is_some_and(|s| t >= s) && self.window_end.is_none_or(|e| t <= e)
    }

    #[inline]
    pub fn enter(&mut self, now: f64) {
        self.accrue(now);
        self.in_system += 1;
    }

    #[inline]
    pub fn leave(&mut self, now: f64, station_arrival: f64) {
        self.accrue(now);
        self.in_system -= 1;
        if self.in_window(station_arrival) {
            self.arrivals += 1;
            self.sojourn_sum += now - station_arrival;
        }
    }

    pub fn in_system(&self) -> u64 {
        self.in_system
    }

    pub fn window(&self) -> f64 {
        match (self.window_start, self.window_end) {
            (Some(s), Some(e)) => e - s,
            _ => 0.0,
        }
    }

    /// `(L, lambda, W)` over the window.
    pub fn little(&self) -> LittleCheck {
        let window = self.window();
        LittleCheck {
            station: self.name,
            mean_in_system: self.area / window,
            arrival_rate: self.arrivals as f64 / window,
            mean_sojourn: self.sojourn_sum / self.arrivals as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LittleCheck {
    pub station: &'static str,
    pub mean_in_system: f64,
    pub arrival_rate: f64,
    pub mean_sojourn: f64,
}

impl LittleCheck {
    /// `|L - lambda W| / L`.
    pub fn relative_gap(&self) -> f64 {
        (self.mean_in_system - self.arrival_rate * self.mean_sojourn).abs() / self.mean_in_system
    }
}

/// Why a replication stopped early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub queue: Queue,
    pub time: f64,
    pub length: usize,
}

/// Everything measured in one replication.
#[derive(Debug, Clone, Default)]
pub struct ReplicationStats {
    pub replication: u64,
    pub latency: Moments,
    pub aoi: Moments,
    pub item_latency: Vec<Moments>,
    pub item_aoi: Vec<Moments>,
    pub stations: Vec<Station>,
    /// RSUC: time between successive installs of the same item, pooled.
    pub update_interval: Moments,
    /// ReA: requests served between successive updates of each item.
    pub requests_between_updates: Vec<Moments>,
    pub updates: u64,
    pub end_time: f64,
    pub diverged: Option<Divergence>,
}

impl ReplicationStats {
    pub fn n_delivered(&self) -> u64 {
        self.latency.count
    }
}

/// Mean across replications and its 95% Student-t half-width (infinite with a
/// single replication).
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, t_quantile_975(n - 1) * (var / n as f64).sqrt())
}

pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_basic() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn t_quantiles() {
        assert!((t_quantile_975(9) - 2.262157).abs() < 1e-5);
        assert!((t_quantile_975(1) - 12.7062).abs() < 1e-3);
    }

    #[test]
    fn ci_shapes() {
        let (m, h) = mean_ci95(&[1.0]);
        assert_eq!(m, 1.0);
        assert!(h.is_infinite());
        let (m, h) = mean_ci95(&[1.0, 1.0, 1.0]);
        assert_eq!((m, h), (1.0, 0.0));
    }

    #[test]
    fn station_window_clipping() {
        let mut s = Station::new("x");
        s.enter(0.0); // before window
        s.open(1.0);
        s.enter(2.0);
        s.leave(3.0, 2.0);
        s.close(4.0);
        s.leave(5.0, 0.0);
        // one in system on [1,2], two on [2,3], one on [3,4]
        assert!((s.area - 4.0).abs() < 1e-12);
        assert_eq!(s.arrivals, 1);
        assert_eq!(s.window(), 3.0);
    }
}
