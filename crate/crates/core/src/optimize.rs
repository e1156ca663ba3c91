//! Solvers for the bandwidth split and update-probability problems.
//!
//! * [`p1_opt_beta`]: latency-optimal split of the conventional scheme.
//! * [`p2_solve`]: RSUC split minimizing latency + `W_A` x AoI.
//! * [`p3_min_beta`]: RSUC split minimizing latency under an AoI cap.
//! * [`p4_solve`]: per-item ReA update probabilities minimizing the update
//!   ratio under an average-AoI cap.

use crate::analytic::{self, rsuc_aoi};
use crate::error::{Error, Queue, Result};
use crate::model::{positive_finite, ChannelRates, Scenario};
use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Finds the boundary of a monotone predicate: `pred(lo)` false, `pred(hi)` true.
/// Returns the final `(lo, hi)` bracket once `hi - lo <= tol`.
pub(crate) fn bisect<T: Real>(
    what: &'static str,
    mut lo: T,
    mut hi: T,
    tol: T,
    max_iter: usize,
    pred: impl Fn(T) -> bool,
) -> Result<(T, T, usize)> {
    let two = T::lit(2.0);
    for iter in 0..max_iter {
        if hi - lo <= tol {
            return Ok((lo, hi, iter));
        }
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            // Bracket narrower than one ulp.
            return Ok((lo, hi, iter));
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi - lo <= tol {
        Ok((lo, hi, max_iter))
    } else {
        Err(Error::NoConvergence {
            what,
            iterations: max_iter,
        })
    }
}

/// Latency-optimal conventional split `beta*`.
pub fn p1_opt_beta<T: Real>(rates: &ChannelRates<T>, lambda_total: T) -> Result<T> {
    analytic::latency_optimal_split(rates, lambda_total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2Config<T = f64> {
    /// Weight of AoI relative to latency.
    pub weight_aoi_w: T,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> P2Config<T> {
    pub fn new(weight_aoi_w: T) -> Self {
        Self {
            weight_aoi_w,
            tol: T::lit(DEFAULT_TOL),
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2Solution<T = f64> {
    pub beta: T,
    /// Left side minus right side of the optimality condition at `beta`.
    pub residual: T,
    pub iterations: usize,
    /// Set when `W_A = 0`: the optimum is the `beta -> 0` edge, reported as `tol`.
    pub boundary: bool,
}

/// Left side of the P2 optimality condition.
pub fn p2_condition_lhs<T: Real>(rates: &ChannelRates<T>, lambda_total: T, weight: T, beta: T) -> T {
    let headroom = T::one() - lambda_total / rates.r_dl;
    let a = headroom / beta - T::one();
    let b = beta.recip() - T::one();
    (a * a).recip() + weight / (b * b)
}

/// Right side of the P2 optimality condition, `(S+3) W_A R_DL / (2 R_UL)`.
pub fn p2_condition_rhs<T: Real>(rates: &ChannelRates<T>, items: usize, weight: T) -> T {
    T::of_usize(items + 3) * weight * rates.r_dl / (T::lit(2.0) * rates.r_ul)
}

/// Weighted objective `latency + W_A * AoI` of the RSUC scheme.
pub fn p2_objective<T: Real>(
    rates: &ChannelRates<T>,
    lambda_total: T,
    items: usize,
    weight: T,
    beta: T,
) -> Result<T> {
    Ok(analytic::rsuc_latency(rates, lambda_total, beta)? + weight * rsuc_aoi(rates, items, beta)?)
}

/// Solves the P2 optimality condition by bisection on `(0, 1 - Lambda/R_DL)`.
pub fn p2_solve<T: Real>(
    rates: &ChannelRates<T>,
    lambda_total: T,
    items: usize,
    cfg: &P2Config<T>,
) -> Result<P2Solution<T>> {
    if !(cfg.weight_aoi_w >= T::zero()) || !cfg.weight_aoi_w.is_finite() {
        return Err(Error::invalid("weight_aoi", "must be finite and >= 0"));
    }
    positive_finite("tol", cfg.tol)?;
    if items == 0 {
        return Err(Error::invalid("items", "need at least one item"));
    }
    if !(lambda_total >= T::zero()) {
        return Err(Error::invalid("lambda_total", "must be >= 0"));
    }
    if lambda_total >= rates.r_dl {
        return Err(Error::Overload {
            queue: Queue::Downlink,
            load: lambda_total.as_f64(),
            rate: rates.r_dl.as_f64(),
        });
    }
    let upper = T::one() - lambda_total / rates.r_dl;
    let rhs = p2_condition_rhs(rates, items, cfg.weight_aoi_w);
    if cfg.weight_aoi_w == T::zero() {
        let beta = cfg.tol;
        return Ok(P2Solution {
            beta,
            residual: p2_condition_lhs(rates, lambda_total, cfg.weight_aoi_w, beta) - rhs,
            iterations: 0,
            boundary: true,
        });
    }
    let lhs = |b: T| p2_condition_lhs(rates, lambda_total, cfg.weight_aoi_w, b);
    let (lo, hi, iterations) = bisect("p2 bisection", T::zero(), upper, cfg.tol, cfg.max_iter, |b| {
        lhs(b) >= rhs
    })?;
    let beta = (lo + hi) / T::lit(2.0);
    Ok(P2Solution {
        beta,
        residual: lhs(beta) - rhs,
        iterations,
        boundary: false,
    })
}

/// Lowest AoI reachable by RSUC with any split, `(1/sqrt(R_DL) + sqrt((S+3)/(2 R_UL)))^2`.
pub fn theorem4_min_aoi<T: Real>(rates: &ChannelRates<T>, items: usize) -> T {
    let x = rates.r_dl.sqrt().recip() + (T::of_usize(items + 3) / (T::lit(2.0) * rates.r_ul)).sqrt();
    x * x
}

/// Split achieving [`theorem4_min_aoi`], `1 - 1/(1 + sqrt((S+3) R_DL / (2 R_UL)))`.
pub fn theorem4_split<T: Real>(rates: &ChannelRates<T>, items: usize) -> T {
    let x = (T::of_usize(items + 3) * rates.r_dl / (T::lit(2.0) * rates.r_ul)).sqrt();
    T::one() - (T::one() + x).recip()
}

/// Smallest split meeting the AoI cap, ignoring the load.
fn rsuc_min_split_for_cap<T: Real>(rates: &ChannelRates<T>, items: usize, aoi_cap: T) -> Result<T> {
    if items == 0 {
        return Err(Error::invalid("items", "need at least one item"));
    }
    if aoi_cap.is_nan() {
        return Err(Error::invalid("aoi_cap", "not a number"));
    }
    let floor = theorem4_min_aoi(rates, items);
    let beta_hat = theorem4_split(rates, items);
    if aoi_cap < floor * (T::one() - T::lit(4.0) * T::epsilon()) {
        return Err(Error::InfeasibleAoi {
            cap: aoi_cap.as_f64(),
            floor: floor.as_f64(),
        });
    }
    if aoi_cap.is_infinite() {
        return Ok(T::zero());
    }
    // a/beta + d/(1-beta) = A  <=>  A beta^2 - (A + a - d) beta + a = 0.
    let a = T::of_usize(items + 3) / (T::lit(2.0) * rates.r_ul);
    let d = rates.r_dl.recip();
    let big_a = aoi_cap;
    let b = big_a + a - d;
    let disc = b * b - T::lit(4.0) * big_a * a;
    // Within rounding of a double root: the cap is the floor itself.
    if disc <= T::lit(64.0) * T::epsilon() * b * b {
        return Ok(beta_hat);
    }
    // Smaller root in cancellation-free form.
    let root = T::lit(2.0) * a / (b + disc.sqrt());
    if !(root < beta_hat) {
        return Ok(beta_hat);
    }

    let meets = |beta: T| beta > T::zero() && rsuc_aoi(rates, items, beta).is_ok_and(|v| v <= aoi_cap);
    let tol = T::lit(DEFAULT_TOL);
    let pad = T::lit(1e-9).max(root * T::lit(1e-9));
    let mut lo = (root - pad).max(T::zero());
    let mut hi = (root + pad).min(beta_hat);
    if meets(lo) || !meets(hi) {
        lo = T::zero();
        hi = beta_hat;
    }
    if meets(lo) {
        return Ok(lo);
    }
    if !meets(hi) {
        // Rounding at the very floor.
        return Ok(beta_hat);
    }
    let (_, hi, _) = bisect("p3 refinement", lo, hi, tol, DEFAULT_MAX_ITER, meets)?;
    Ok(hi)
}

/// Smallest RSUC split whose AoI does not exceed `aoi_cap`; this also
/// minimizes RSUC latency under the cap because latency grows with `beta`.
pub fn p3_min_beta<T: Real>(rates: &ChannelRates<T>, lambda_total: T, items: usize, aoi_cap: T) -> Result<T> {
    if !(lambda_total >= T::zero()) {
        return Err(Error::invalid("lambda_total", "must be >= 0"));
    }
    let beta = rsuc_min_split_for_cap(rates, items, aoi_cap)?;
    let down = rates.downlink(beta);
    if down <= lambda_total {
        return Err(Error::InfeasibleLoad {
            cap: aoi_cap.as_f64(),
            beta: beta.as_f64(),
            rate: down.as_f64(),
            load: lambda_total.as_f64(),
        });
    }
    Ok(beta)
}

/// RSUC capacity when the split is the smallest one meeting `aoi_cap`.
pub fn rsuc_capacity_at_aoi<T: Real>(rates: &ChannelRates<T>, items: usize, aoi_cap: T) -> Result<T> {
    let beta = rsuc_min_split_for_cap(rates, items, aoi_cap)?;
    Ok(rates.downlink(beta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct P4Solution<T = f64> {
    pub update_prob: Vec<T>,
    /// Objective value, `sum(p_s lambda_s) / Lambda`.
    pub update_ratio: T,
    /// Items fixed at probability 1, in the order they were clamped.
    pub clamped: Vec<usize>,
    pub iterations: usize,
    /// `Y` of the final iteration.
    pub y: T,
    /// `sum(lambda_s p_s / R_UL + 1/p_s) - (S + Lambda (A - 1/R_DL))`; zero when active.
    pub residual: T,
}

impl<T: Real> P4Solution<T> {
    /// Whether the shared server is stable at this update ratio.
    pub fn is_stable(&self, rates: &ChannelRates<T>, lambda_total: T) -> bool {
        analytic::rea_stability_margin(rates, lambda_total, self.update_ratio) > T::zero()
    }
}

/// Lowest average AoI any update-probability vector achieves, using the
/// per-item minimizer `min(1, sqrt(R_UL / lambda_s))`.
pub fn p4_floor<T: Real>(rates: &ChannelRates<T>, scenario: &Scenario<T>) -> Result<T> {
    let best: Vec<T> = scenario
        .lambda_s
        .iter()
        .map(|&l| (rates.r_ul / l).sqrt().min(T::one()))
        .collect();
    analytic::rea_aoi_avg(rates, scenario, &best)
}

/// Minimizes the update ratio subject to the request-weighted average AoI
/// not exceeding `aoi_cap`, clamping probabilities that reach 1.
pub fn p4_solve<T: Real>(rates: &ChannelRates<T>, scenario: &Scenario<T>, aoi_cap: T) -> Result<P4Solution<T>> {
    scenario.validate()?;
    if let Some(item) = scenario.lambda_s.iter().position(|&l| l <= T::zero()) {
        return Err(Error::invalid(
            "lambda_list",
            format!("item {item} has zero request rate"),
        ));
    }
    if aoi_cap.is_nan() {
        return Err(Error::invalid("aoi_cap", "not a number"));
    }
    // Updating on every request gives `corner`. When some item's uplink is
    // overloaded (lambda_s > R_UL) the true floor sits below it at p_s < 1.
    let corner = rates.r_ul.recip() + rates.r_dl.recip();
    let floor = p4_floor(rates, scenario)?;
    if aoi_cap < floor || (floor >= corner && aoi_cap <= corner) {
        return Err(Error::InfeasibleAoi {
            cap: aoi_cap.as_f64(),
            floor: floor.as_f64(),
        });
    }

    let items = scenario.item_count_s;
    let total = scenario.total_lambda();
    let full_budget = T::of_usize(items) + total * (aoi_cap - rates.r_dl.recip());
    let four_over_ru = T::lit(4.0) / rates.r_ul;
    let mut p = vec![T::one(); items];
    let mut active: Vec<usize> = (0..items).collect();
    let mut clamped = Vec::new();
    let mut budget = full_budget;
    let mut iterations = 0;
    let mut y = T::zero();

    while !active.is_empty() {
        iterations += 1;
        let root_sum = active
            .iter()
            .fold(T::zero(), |acc, &s| acc + scenario.lambda_s[s].sqrt());
        y = budget / root_sum;
        let disc = y * y - four_over_ru;
        if disc < T::zero() {
            return Err(Error::InfeasibleAoi {
                cap: aoi_cap.as_f64(),
                floor: floor.as_f64(),
            });
        }
        let scale = T::lit(2.0) / (y + disc.sqrt());
        let mut newly = Vec::new();
        for &s in &active {
            let candidate = scale / scenario.lambda_s[s].sqrt();
            if candidate >= T::one() {
                newly.push(s);
            } else {
                p[s] = candidate;
            }
        }
        if newly.is_empty() {
            break;
        }
        for &s in &newly {
            p[s] = T::one();
            budget = budget - (scenario.lambda_s[s] / rates.r_ul + T::one());
        }
        active.retain(|s| !newly.contains(s));
        clamped.extend(newly);
    }

    let lhs = scenario
        .lambda_s
        .iter()
        .zip(&p)
        .fold(T::zero(), |acc, (&l, &ps)| acc + l * ps / rates.r_ul + ps.recip());
    let update_ratio = crate::model::update_ratio(scenario, &p);
    Ok(P4Solution {
        update_prob: p,
        update_ratio,
        clamped,
        iterations,
        y,
        residual: lhs - full_budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{conv_latency, rea_aoi_avg, rsuc_latency, rsuc_tradeoff_threshold};
    use proptest::prelude::*;

    fn sym() -> ChannelRates {
        ChannelRates::new(1000.0, 1000.0).unwrap()
    }

    #[test]
    fn p1_examples() {
        for l in [0.0, 100.0, 250.0, 499.0] {
            assert!((p1_opt_beta(&sym(), l).unwrap() - 0.5).abs() < 1e-15);
        }
        let asym = ChannelRates::new(300.0, 1000.0).unwrap();
        let expected = 3e5f64.sqrt() / (300.0 + 3e5f64.sqrt());
        assert!((p1_opt_beta(&asym, 0.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.646111).abs() < 1e-6);
        assert!(p1_opt_beta(&asym, 231.0).is_err());
    }

    #[test]
    fn p1_beats_grid_and_is_strictly_feasible() {
        let rates = ChannelRates::new(300.0, 1000.0).unwrap();
        for frac in [0.0, 0.3, 0.7, 0.95] {
            let l = frac * analytic::conv_capacity(&rates);
            let beta = p1_opt_beta(&rates, l).unwrap();
            assert!(rates.uplink(beta) > l && rates.downlink(beta) > l);
            let best = conv_latency(&rates, l, beta).unwrap();
            for k in 1..1000 {
                if let Ok(v) = conv_latency(&rates, l, k as f64 / 1000.0) {
                    assert!(best <= v * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn p2_residual_and_weight_monotonicity() {
        let rates = sym();
        let sol = p2_solve(&rates, 200.0, 10, &P2Config::new(1.0)).unwrap();
        assert!(sol.residual.abs() < 1e-9, "residual {}", sol.residual);
        assert!(sol.beta > 0.0 && sol.beta < 0.8);
        assert!(!sol.boundary);

        let betas: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&w| p2_solve(&rates, 200.0, 10, &P2Config::new(w)).unwrap().beta)
            .collect();
        assert!(betas[0] < betas[1] && betas[1] < betas[2]);

        let zero = p2_solve(&rates, 200.0, 10, &P2Config::new(0.0)).unwrap();
        assert!(zero.boundary && zero.beta <= 1e-12);
        assert!(p2_solve(&rates, 1000.0, 10, &P2Config::new(1.0)).unwrap_err().is_overload());
    }

    #[test]
    fn p2_matches_numerical_minimum() {
        let rates = ChannelRates::new(300.0, 1000.0).unwrap();
        let (l, s, w) = (150.0, 4, 2.5);
        let sol = p2_solve(&rates, l, s, &P2Config::new(w)).unwrap();
        let upper = 1.0 - l / rates.r_dl;
        let f = |b: f64| p2_objective(&rates, l, s, w, b).unwrap();
        let grid_best = (1..100_000)
            .map(|k| upper * k as f64 / 100_000.0)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((grid_best - sol.beta).abs() < 2.0 * upper / 100_000.0);
    }

    #[test]
    fn p2_large_weight_tends_to_threshold() {
        let rates = sym();
        let sol = p2_solve(&rates, 100.0, 1, &P2Config::new(1e9)).unwrap();
        assert!((sol.beta - rsuc_tradeoff_threshold(&rates, 1)).abs() < 1e-5);
    }

    #[test]
    fn theorem4_examples() {
        let rates = sym();
        let floor = theorem4_min_aoi(&rates, 1);
        let expected = (1.0 / 1000f64.sqrt() + (4.0f64 / 2000.0).sqrt()).powi(2);
        assert!((floor - expected).abs() < 1e-18);
        assert!((floor - 5.8284e-3).abs() < 1e-7);
        for s in [1usize, 3, 50] {
            let at = rsuc_aoi(&rates, s, theorem4_split(&rates, s)).unwrap();
            assert!((at - theorem4_min_aoi(&rates, s)).abs() < 1e-12);
        }
        let floors: Vec<f64> = [1, 10, 100].iter().map(|&s| theorem4_min_aoi(&rates, s)).collect();
        assert!(floors[0] < floors[1] && floors[1] < floors[2]);
    }

    #[test]
    fn p3_examples() {
        let rates = sym();
        let floor = theorem4_min_aoi(&rates, 1);
        let at_floor = p3_min_beta(&rates, 100.0, 1, floor).unwrap();
        assert!((at_floor - theorem4_split(&rates, 1)).abs() < 1e-10);

        let loose = p3_min_beta(&rates, 100.0, 1, 1e6).unwrap();
        assert!(loose < 1e-5);
        assert_eq!(p3_min_beta(&rates, 100.0, 1, f64::INFINITY).unwrap(), 0.0);

        let b = p3_min_beta(&rates, 100.0, 1, 6e-3).unwrap();
        assert!((b - 0.5).abs() < 1e-10);

        assert!(matches!(p3_min_beta(&rates, 100.0, 1, floor * 0.99), Err(Error::InfeasibleAoi { .. })));
        assert!(matches!(p3_min_beta(&rates, 600.0, 1, 6e-3), Err(Error::InfeasibleLoad { .. })));
    }

    #[test]
    fn p3_non_increasing_in_cap() {
        let rates = ChannelRates::new(300.0, 1000.0).unwrap();
        let floor = theorem4_min_aoi(&rates, 7);
        let betas: Vec<f64> = (0..200)
            .map(|k| p3_min_beta(&rates, 10.0, 7, floor * (1.0 + k as f64 * 0.05)).unwrap())
            .collect();
        assert!(betas.windows(2).all(|w| w[1] <= w[0]));
        for (k, &b) in betas.iter().enumerate().skip(1) {
            let cap = floor * (1.0 + k as f64 * 0.05);
            assert!(rsuc_aoi(&rates, 7, b).unwrap() <= cap);
            assert!(rsuc_aoi(&rates, 7, b - 1e-9).unwrap() > cap);
        }
    }

    #[test]
    fn capacity_at_aoi_examples() {
        let rates = sym();
        let strict = rsuc_capacity_at_aoi(&rates, 1, theorem4_min_aoi(&rates, 1)).unwrap();
        assert!((strict - 1000.0 / (1.0 + 2f64.sqrt())).abs() < 1e-7);
        assert!((strict - 414.21).abs() < 1e-2);
        assert!(rsuc_capacity_at_aoi(&rates, 1, 1e9).unwrap() > 999.99);
        let caps: Vec<f64> = (0..100)
            .map(|k| rsuc_capacity_at_aoi(&rates, 1, 5.83e-3 * 1.1f64.powi(k)).unwrap())
            .collect();
        assert!(caps.windows(2).all(|w| w[1] >= w[0]));
        assert!(rsuc_capacity_at_aoi(&rates, 1, 1e-3).is_err());
    }

    #[test]
    fn p4_worked_example() {
        let rates = sym();
        let sc = Scenario::from_rates(rates, vec![150.0, 50.0]).unwrap();
        let sol = p4_solve(&rates, &sc, 0.02).unwrap();
        // Y = (2 + 200 (0.02 - 0.001)) / (sqrt 150 + sqrt 50)
        let y = 5.8 / (150f64.sqrt() + 50f64.sqrt());
        assert!((sol.y - y).abs() < 1e-14);
        assert!((sol.y - 0.30023).abs() < 1e-5);
        assert!((sol.update_prob[0] - 0.27504).abs() < 1e-4);
        assert!((sol.update_prob[1] - 0.47636).abs() < 1e-4);
        assert!(sol.clamped.is_empty());
        assert!(sol.residual.abs() < 1e-9);
        assert!((rea_aoi_avg(&rates, &sc, &sol.update_prob).unwrap() - 0.02).abs() < 1e-12);
        assert_eq!(sol.iterations, 1);
        assert!(sol.is_stable(&rates, 200.0));
    }

    #[test]
    fn p4_uniform_rates_give_equal_probs() {
        let rates = sym();
        let sc = Scenario::from_rates(rates, vec![40.0; 5]).unwrap();
        let sol = p4_solve(&rates, &sc, 0.05).unwrap();
        assert!(sol.update_prob.iter().all(|p| (p - sol.update_prob[0]).abs() < 1e-15));
    }

    #[test]
    fn p4_clamps_rare_items() {
        let rates = sym();
        let sc = Scenario::from_rates(rates, vec![400.0, 1.0, 0.5]).unwrap();
        let sol = p4_solve(&rates, &sc, 0.01).unwrap();
        assert!(!sol.clamped.is_empty());
        assert!(sol.iterations >= 2);
        for &s in &sol.clamped {
            assert_eq!(sol.update_prob[s], 1.0);
        }
        assert!(sol.residual.abs() < 1e-9);
    }

    #[test]
    fn p4_infeasible_caps() {
        let rates = sym();
        let sc = Scenario::from_rates(rates, vec![150.0, 50.0]).unwrap();
        assert!(matches!(p4_solve(&rates, &sc, 0.002), Err(Error::InfeasibleAoi { .. })));
        assert!(matches!(p4_solve(&rates, &sc, 0.001), Err(Error::InfeasibleAoi { .. })));
        let zero = Scenario::from_rates(rates, vec![150.0, 0.0]).unwrap();
        assert!(p4_solve(&rates, &zero, 0.02).is_err());
        // Overloaded uplink: per-item floor sits at p < 1.
        let slow = ChannelRates::new(100.0, 1000.0).unwrap();
        let hot = Scenario::from_rates(slow, vec![400.0]).unwrap();
        let floor: f64 = p4_floor(&slow, &hot).unwrap();
        assert!((floor - 0.0085).abs() < 1e-15);
        assert!(floor < 1.0 / 100.0 + 1.0 / 1000.0);
        assert!(p4_solve(&slow, &hot, floor * 0.999).is_err());
        assert!(p4_solve(&slow, &hot, 0.009).is_ok());
    }

    #[test]
    fn p4_respects_single_item_pivot() {
        let rates = ChannelRates::new(100.0, 1000.0).unwrap();
        let sc = Scenario::from_rates(rates, vec![400.0]).unwrap();
        let floor = p4_floor(&rates, &sc).unwrap();
        for k in 0..40 {
            let sol = p4_solve(&rates, &sc, floor * (1.0 + 0.05 * k as f64)).unwrap();
            assert!(sol.update_prob[0] <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn p4_beats_brute_force() {
        let rates = sym();
        let sc = Scenario::from_rates(rates, vec![150.0, 50.0]).unwrap();
        let cap = 0.02;
        let sol = p4_solve(&rates, &sc, cap).unwrap();
        let mut best = f64::INFINITY;
        for i in 1..=1000 {
            for j in 1..=1000 {
                let p = [i as f64 * 1e-3, j as f64 * 1e-3];
                if rea_aoi_avg(&rates, &sc, &p).unwrap() <= cap {
                    best = best.min((150.0 * p[0] + 50.0 * p[1]) / 200.0);
                }
            }
        }
        assert!(sol.update_ratio <= best + 1e-12);
        // Within grid resolution of the brute-force optimum.
        assert!(best - sol.update_ratio < 1e-3);
    }

    #[test]
    fn p4_generic_f32() {
        let rates = ChannelRates::<f32>::new(1000.0, 1000.0).unwrap();
        let sc = Scenario::from_rates(rates, vec![150.0, 50.0]).unwrap();
        let sol = p4_solve(&rates, &sc, 0.02).unwrap();
        assert!((sol.update_prob[0] - 0.27504).abs() < 1e-4);
    }

    #[test]
    fn latency_under_cap_is_monotone() {
        let rates = sym();
        let floor = theorem4_min_aoi(&rates, 3);
        let lat: Vec<f64> = (0..60)
            .map(|k| {
                let b = p3_min_beta(&rates, 200.0, 3, floor * 1.08f64.powi(k)).unwrap();
                rsuc_latency(&rates, 200.0, b).unwrap()
            })
            .collect();
        assert!(lat.windows(2).all(|w| w[1] <= w[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn p4_kkt_and_monotone(
            lambdas in proptest::collection::vec(1.0f64..400.0, 1..12),
            ru in 50.0f64..3000.0, rd in 50.0f64..3000.0, slack in 0.01f64..20.0
        ) {
            let rates = ChannelRates::new(ru, rd).unwrap();
            let sc = Scenario::from_rates(rates, lambdas.clone()).unwrap();
            let cap = p4_floor(&rates, &sc).unwrap() * (1.0 + slack);
            let sol = p4_solve(&rates, &sc, cap).unwrap();
            prop_assert!(sol.update_prob.iter().all(|&p| p > 0.0 && p <= 1.0));
            prop_assert!(sol.iterations <= lambdas.len());
            let interior: Vec<usize> = (0..lambdas.len()).filter(|s| !sol.clamped.contains(s)).collect();
            if !interior.is_empty() {
                prop_assert!(sol.residual.abs() <= 1e-9 * (1.0 + sol.residual.abs().max(1.0)));
                let k0 = sol.update_prob[interior[0]] * lambdas[interior[0]].sqrt();
                for &s in &interior {
                    prop_assert!((sol.update_prob[s] * lambdas[s].sqrt() - k0).abs() <= 1e-9);
                }
            }
            let achieved = rea_aoi_avg(&rates, &sc, &sol.update_prob).unwrap();
            prop_assert!(achieved <= cap * (1.0 + 1e-9));
            let relaxed = p4_solve(&rates, &sc, cap * 1.3).unwrap();
            prop_assert!(relaxed.update_ratio <= sol.update_ratio + 1e-12);
        }

        #[test]
        fn p1_identity_and_threshold_identity(
            ru in 10.0f64..5000.0, rd in 10.0f64..5000.0, items in 1usize..1000
        ) {
            let rates = ChannelRates::new(ru, rd).unwrap();
            prop_assert!((theorem4_split(&rates, items) - rsuc_tradeoff_threshold(&rates, items)).abs() < 1e-12);
        }
    }
}
