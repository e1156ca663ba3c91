//! Closed-form latency, AoI and capacity of the three service schemes.
//!
//! Every function is a pure evaluation. Stability checks are strict
//! inequalities with no safety margin, so values close to capacity are
//! returned as (large) finite numbers.

use crate::error::{Error, Queue, Result};
use crate::model::{positive_finite, unit_interval, update_ratio, ChannelRates, Scenario, SchemeParams};
use crate::scalar::Real;

fn stable<T: Real>(queue: Queue, load: T, rate: T) -> Result<()> {
    if rate > load {
        Ok(())
    } else {
        Err(Error::Overload {
            queue,
            load: load.as_f64(),
            rate: rate.as_f64(),
        })
    }
}

fn check_load<T: Real>(lambda_total: T) -> Result<()> {
    if lambda_total >= T::zero() && lambda_total.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("lambda_total", format!("must be finite and >= 0, got {lambda_total}")))
    }
}

/// Sum of the two M/M/1 sojourn times of the fetch-then-deliver tandem.
pub fn conv_latency<T: Real>(rates: &ChannelRates<T>, lambda_total: T, beta: T) -> Result<T> {
    check_load(lambda_total)?;
    unit_interval("beta", beta)?;
    let up = rates.uplink(beta);
    let down = rates.downlink(beta);
    stable(Queue::Uplink, lambda_total, up)?;
    stable(Queue::Downlink, lambda_total, down)?;
    Ok(T::one() / (up - lambda_total) + T::one() / (down - lambda_total))
}

/// Largest sustainable request rate of the conventional scheme: `1 / (1/R_UL + 1/R_DL)`.
pub fn conv_capacity<T: Real>(rates: &ChannelRates<T>) -> T {
    T::one() / (rates.r_ul.recip() + rates.r_dl.recip())
}

fn conv_feasible<T: Real>(rates: &ChannelRates<T>, lambda_total: T) -> Result<()> {
    check_load(lambda_total)?;
    // Written as the utilisation sum rather than against the capacity value
    // so the boundary matches the split formula exactly.
    let util = lambda_total * (rates.r_ul.recip() + rates.r_dl.recip());
    if util < T::one() {
        Ok(())
    } else {
        Err(Error::Overload {
            queue: Queue::Tandem,
            load: lambda_total.as_f64(),
            rate: conv_capacity(rates).as_f64(),
        })
    }
}

/// Latency-minimizing split of the conventional scheme.
pub(crate) fn latency_optimal_split<T: Real>(rates: &ChannelRates<T>, lambda_total: T) -> Result<T> {
    conv_feasible(rates, lambda_total)?;
    let geo = (rates.r_ul * rates.r_dl).sqrt();
    let skew = T::one() - (rates.r_ul / rates.r_dl).sqrt();
    Ok((geo + lambda_total * skew) / (rates.r_ul + geo))
}

/// Minimal conventional latency, reached at the latency-optimal split.
pub fn conv_min_latency<T: Real>(rates: &ChannelRates<T>, lambda_total: T) -> Result<T> {
    conv_feasible(rates, lambda_total)?;
    let root_sum = rates.r_ul.sqrt().recip() + rates.r_dl.sqrt().recip();
    let util = lambda_total * (rates.r_ul.recip() + rates.r_dl.recip());
    Ok(root_sum * root_sum / (T::one() - util))
}

/// Conventional AoI at the latency-optimal split: uplink transmission plus
/// downlink sojourn.
pub fn conv_aoi<T: Real>(rates: &ChannelRates<T>, lambda_total: T) -> Result<T> {
    let beta = latency_optimal_split(rates, lambda_total)?;
    conv_aoi_at_beta(rates, lambda_total, beta)
}

/// Conventional AoI at an arbitrary split, for comparing against simulation.
pub fn conv_aoi_at_beta<T: Real>(rates: &ChannelRates<T>, lambda_total: T, beta: T) -> Result<T> {
    check_load(lambda_total)?;
    unit_interval("beta", beta)?;
    let up = rates.uplink(beta);
    let down = rates.downlink(beta);
    stable(Queue::Uplink, lambda_total, up)?;
    stable(Queue::Downlink, lambda_total, down)?;
    Ok(up.recip() + (down - lambda_total).recip())
}

/// RSUC delivery latency: a single M/M/1 downlink on `1 - beta` of the band.
pub fn rsuc_latency<T: Real>(rates: &ChannelRates<T>, lambda_total: T, beta: T) -> Result<T> {
    check_load(lambda_total)?;
    unit_interval("beta", beta)?;
    let down = rates.downlink(beta);
    stable(Queue::Downlink, lambda_total, down)?;
    Ok((down - lambda_total).recip())
}

/// RSUC AoI, `(S+3)/(2 beta R_UL) + 1/((1-beta) R_DL)`; independent of load.
pub fn rsuc_aoi<T: Real>(rates: &ChannelRates<T>, items: usize, beta: T) -> Result<T> {
    unit_interval("beta", beta)?;
    if items == 0 {
        return Err(Error::invalid("items", "need at least one item"));
    }
    if beta <= T::zero() || beta >= T::one() {
        return Err(Error::DegenerateSplit { beta: beta.as_f64() });
    }
    let cycle = T::of_usize(items + 3) / (T::lit(2.0) * rates.uplink(beta));
    Ok(cycle + rates.downlink(beta).recip())
}

/// Split beyond which more uplink bandwidth hurts both AoI and latency.
/// Also the minimizer of [`rsuc_aoi`].
pub fn rsuc_tradeoff_threshold<T: Real>(rates: &ChannelRates<T>, items: usize) -> T {
    let ratio = T::lit(2.0) * rates.r_ul / (T::of_usize(items + 3) * rates.r_dl);
    (ratio.sqrt() + T::one()).recip()
}

/// First two moments of the request-adaptive service time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReaServiceMoments<T = f64> {
    pub mean_x: T,
    pub mean_x2: T,
    pub update_ratio_p: T,
}

impl<T: Real> ReaServiceMoments<T> {
    /// Moments of `X = I*X1 + X2` with exponential phases and `P(I = 1) = P`.
    pub fn for_ratio(rates: &ChannelRates<T>, update_ratio_p: T) -> Self {
        let two = T::lit(2.0);
        let (ru, rd) = (rates.r_ul, rates.r_dl);
        Self {
            mean_x: update_ratio_p / ru + rd.recip(),
            mean_x2: two * update_ratio_p / (ru * ru)
                + two / (rd * rd)
                + two * update_ratio_p / (ru * rd),
            update_ratio_p,
        }
    }

    pub fn variance(&self) -> T {
        self.mean_x2 - self.mean_x * self.mean_x
    }
}

pub fn rea_service_moments<T: Real>(
    rates: &ChannelRates<T>,
    scenario: &Scenario<T>,
    update_prob: &[T],
) -> Result<ReaServiceMoments<T>> {
    check_update_probs(scenario, update_prob)?;
    Ok(ReaServiceMoments::for_ratio(rates, update_ratio(scenario, update_prob)))
}

fn check_update_probs<T: Real>(scenario: &Scenario<T>, update_prob: &[T]) -> Result<()> {
    if update_prob.len() != scenario.item_count_s {
        return Err(Error::invalid(
            "update_prob",
            format!("{} probabilities for {} items", update_prob.len(), scenario.item_count_s),
        ));
    }
    update_prob.iter().try_for_each(|&p| unit_interval("update_prob", p))
}

/// Mean sojourn of an M/G/1 queue: Pollaczek-Khinchine wait plus service.
pub fn pollaczek_khinchine_sojourn<T: Real>(arrival_rate: T, mean_x: T, mean_x2: T) -> Result<T> {
    check_load(arrival_rate)?;
    let rho = arrival_rate * mean_x;
    if rho >= T::one() {
        return Err(Error::Overload {
            queue: Queue::Shared,
            load: arrival_rate.as_f64(),
            rate: mean_x.recip().as_f64(),
        });
    }
    Ok(arrival_rate * mean_x2 / (T::lit(2.0) * (T::one() - rho)) + mean_x)
}

/// Request-adaptive latency for a scalar update ratio `P`.
pub fn rea_latency<T: Real>(rates: &ChannelRates<T>, lambda_total: T, update_ratio_p: T) -> Result<T> {
    check_load(lambda_total)?;
    unit_interval("update_ratio", update_ratio_p)?;
    let (ru, rd) = (rates.r_ul, rates.r_dl);
    let util = lambda_total * (update_ratio_p / ru + rd.recip());
    if util >= T::one() {
        return Err(Error::Overload {
            queue: Queue::Shared,
            load: lambda_total.as_f64(),
            rate: rea_capacity(rates, update_ratio_p)?.as_f64(),
        });
    }
    let numer = rd.recip() + update_ratio_p * lambda_total / (ru * ru);
    Ok(numer / (T::one() - util) + update_ratio_p / ru)
}

/// `1 / (P/R_UL + 1/R_DL)`.
pub fn rea_capacity<T: Real>(rates: &ChannelRates<T>, update_ratio_p: T) -> Result<T> {
    unit_interval("update_ratio", update_ratio_p)?;
    Ok((update_ratio_p / rates.r_ul + rates.r_dl.recip()).recip())
}

/// `1 - Lambda (P/R_UL + 1/R_DL)`; positive iff the shared server is stable.
pub fn rea_stability_margin<T: Real>(rates: &ChannelRates<T>, lambda_total: T, update_ratio_p: T) -> T {
    T::one() - lambda_total * (update_ratio_p / rates.r_ul + rates.r_dl.recip())
}

/// Per-item request-adaptive AoI, `p/R_UL + 1/R_DL + (1-p)/(p lambda)`.
pub fn rea_aoi_item<T: Real>(rates: &ChannelRates<T>, lambda_s: T, update_prob: T) -> Result<T> {
    positive_finite("lambda_s", lambda_s)?;
    unit_interval("update_prob", update_prob)?;
    if update_prob <= T::zero() {
        return Err(Error::UnboundedAoi { item: 0 });
    }
    Ok(update_prob / rates.r_ul
        + rates.r_dl.recip()
        + (T::one() - update_prob) / (update_prob * lambda_s))
}

/// Request-weighted mean of [`rea_aoi_item`] over all items with traffic.
pub fn rea_aoi_avg<T: Real>(rates: &ChannelRates<T>, scenario: &Scenario<T>, update_prob: &[T]) -> Result<T> {
    check_update_probs(scenario, update_prob)?;
    let total = scenario.total_lambda();
    if total <= T::zero() {
        return Err(Error::invalid("lambda_total", "average AoI needs traffic"));
    }
    let mut acc = T::zero();
    for (item, (&lambda, &p)) in scenario.lambda_s.iter().zip(update_prob).enumerate() {
        if lambda == T::zero() {
            continue;
        }
        let aoi = rea_aoi_item(rates, lambda, p).map_err(|e| match e {
            Error::UnboundedAoi { .. } => Error::UnboundedAoi { item },
            other => other,
        })?;
        acc = acc + lambda * aoi;
    }
    Ok(acc / total)
}

/// `(latency, AoI)` of `scheme` on `scenario`.
pub fn evaluate<T: Real>(scenario: &Scenario<T>, scheme: &SchemeParams<T>) -> Result<(T, T)> {
    let rates = &scenario.rates;
    let load = scenario.total_lambda();
    match scheme {
        SchemeParams::Conventional { beta } => Ok((
            conv_latency(rates, load, *beta)?,
            conv_aoi_at_beta(rates, load, *beta)?,
        )),
        SchemeParams::Rsuc { beta } => Ok((
            rsuc_latency(rates, load, *beta)?,
            rsuc_aoi(rates, scenario.item_count_s, *beta)?,
        )),
        SchemeParams::Rea { update_prob } => Ok((
            rea_latency(rates, load, update_ratio(scenario, update_prob))?,
            rea_aoi_avg(rates, scenario, update_prob)?,
        )),
    }
}
