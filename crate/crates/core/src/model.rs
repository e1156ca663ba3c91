//! Domain types shared by the evaluators, solvers and simulator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Full-band uplink and downlink service rates, in content items per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRates<T = f64> {
    pub r_ul: T,
    pub r_dl: T,
}

impl<T: Real> ChannelRates<T> {
    pub fn new(r_ul: T, r_dl: T) -> Result<Self> {
        let rates = Self { r_ul, r_dl };
        rates.validate()?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<()> {
        positive_finite("r_ul", self.r_ul)?;
        positive_finite("r_dl", self.r_dl)
    }

    /// Uplink rate `beta * r_ul` after splitting the band.
    pub fn uplink(&self, beta: T) -> T {
        beta * self.r_ul
    }

    /// Downlink rate `(1 - beta) * r_dl` after splitting the band.
    pub fn downlink(&self, beta: T) -> T {
        (T::one() - beta) * self.r_dl
    }

    pub fn cast<U: Real>(&self) -> ChannelRates<U> {
        ChannelRates {
            r_ul: U::lit(self.r_ul.as_f64()),
            r_dl: U::lit(self.r_dl.as_f64()),
        }
    }
}

/// Physical-layer description that collapses to [`ChannelRates`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams<T = f64> {
    /// Hz.
    pub bandwidth_b: T,
    /// Bits.
    pub content_size_l: T,
    /// Linear SINR.
    pub sinr_ul: T,
    pub sinr_dl: T,
}

/// `r = (B / L) * log2(1 + sinr)` for each direction.
pub fn rates_from_radio<T: Real>(params: &RadioParams<T>) -> Result<ChannelRates<T>> {
    positive_finite("bandwidth_b", params.bandwidth_b)?;
    positive_finite("content_size_l", params.content_size_l)?;
    positive_finite("sinr_ul", params.sinr_ul)?;
    positive_finite("sinr_dl", params.sinr_dl)?;
    let per_bit = params.bandwidth_b / params.content_size_l;
    ChannelRates::new(
        per_bit * (T::one() + params.sinr_ul).log2(),
        per_bit * (T::one() + params.sinr_dl).log2(),
    )
}

/// How total request rate is spread over content items.
#[derive(Debug, Clone, PartialEq)]
pub enum Popularity<T = f64> {
    Uniform,
    /// Rank-`s` item gets weight proportional to `1 / s^theta`.
    Zipf { theta: T },
    /// Unnormalized nonnegative weights, one per item.
    Explicit(Vec<T>),
}

/// Request probability of each item (the Zipf "p_s"; not to be confused with
/// update probabilities, which this crate always calls `update_prob`).
pub fn popularity_weights<T: Real>(pop: &Popularity<T>, items: usize) -> Result<Vec<T>> {
    if items == 0 {
        return Err(Error::invalid("items", "need at least one item"));
    }
    let raw: Vec<T> = match pop {
        Popularity::Uniform => vec![T::one(); items],
        Popularity::Zipf { theta } => {
            if !(*theta >= T::zero()) || !theta.is_finite() {
                return Err(Error::invalid("popularity", "zipf exponent must be >= 0"));
            }
            (1..=items)
                .map(|rank| T::one() / T::of_usize(rank).powf(*theta))
                .collect()
        }
        Popularity::Explicit(w) => {
            if w.len() != items {
                return Err(Error::invalid(
                    "popularity",
                    format!("{} explicit weights for {items} items", w.len()),
                ));
            }
            if w.iter().any(|x| !(*x >= T::zero()) || !x.is_finite()) {
                return Err(Error::invalid("popularity", "weights must be finite and >= 0"));
            }
            w.clone()
        }
    };
    let total = raw.iter().fold(T::zero(), |acc, &x| acc + x);
    if !(total > T::zero()) {
        return Err(Error::invalid("popularity", "weights sum to zero"));
    }
    Ok(raw.into_iter().map(|x| x / total).collect())
}

impl<T: Real> fmt::Display for Popularity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Popularity::Uniform => f.write_str("uniform"),
            Popularity::Zipf { theta } => write!(f, "zipf:{theta}"),
            Popularity::Explicit(w) => {
                f.write_str("explicit:")?;
                for (i, x) in w.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

impl<T: Real> FromStr for Popularity<T> {
    type Err = Error;

    /// Accepts `uniform`, `zipf:<theta>` and `explicit:<w1>,<w2>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |why: &str| Error::invalid("popularity", format!("{why} in `{s}`"));
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map(T::lit)
                .map_err(|_| bad("bad number"))
        };
        if s.eq_ignore_ascii_case("uniform") {
            return Ok(Popularity::Uniform);
        }
        match s.split_once(':') {
            Some(("zipf", theta)) => Ok(Popularity::Zipf { theta: num(theta)? }),
            Some(("explicit", list)) => Ok(Popularity::Explicit(
                list.split(',').map(num).collect::<Result<_>>()?,
            )),
            _ => Err(bad("expected uniform, zipf:<theta> or explicit:<w,...>")),
        }
    }
}

impl<T: Real> Serialize for Popularity<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de, T: Real> Deserialize<'de> for Popularity<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Item set with per-item Poisson request rates and the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T = f64> {
    pub item_count_s: usize,
    pub lambda_s: Vec<T>,
    pub rates: ChannelRates<T>,
}

impl<T: Real> Scenario<T> {
    pub fn from_rates(rates: ChannelRates<T>, lambda_s: Vec<T>) -> Result<Self> {
        let scenario = Self {
            item_count_s: lambda_s.len(),
            lambda_s,
            rates,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Expands `lambda_s = total * weight_s`.
    pub fn from_popularity(
        rates: ChannelRates<T>,
        lambda_total: T,
        pop: &Popularity<T>,
        items: usize,
    ) -> Result<Self> {
        if !(lambda_total >= T::zero()) || !lambda_total.is_finite() {
            return Err(Error::invalid("lambda_total", "must be finite and >= 0"));
        }
        let weights = popularity_weights(pop, items)?;
        Self::from_rates(rates, weights.into_iter().map(|w| w * lambda_total).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if self.item_count_s == 0 {
            return Err(Error::invalid("items", "need at least one item"));
        }
        if self.lambda_s.len() != self.item_count_s {
            return Err(Error::invalid(
                "lambda_list",
                format!("{} rates for {} items", self.lambda_s.len(), self.item_count_s),
            ));
        }
        if self.lambda_s.iter().any(|l| !(*l >= T::zero()) || !l.is_finite()) {
            return Err(Error::invalid("lambda_list", "rates must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn total_lambda(&self) -> T {
        self.lambda_s.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    /// Normalized request probabilities; uniform when the total rate is zero.
    pub fn request_prob(&self) -> Vec<T> {
        let total = self.total_lambda();
        if total > T::zero() {
            self.lambda_s.iter().map(|&l| l / total).collect()
        } else {
            vec![T::one() / T::of_usize(self.item_count_s); self.item_count_s]
        }
    }

    /// Same shape, every rate multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            item_count_s: self.item_count_s,
            lambda_s: self.lambda_s.iter().map(|&l| l * factor).collect(),
            rates: self.rates,
        }
    }
}

/// Service scheme plus its control knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SchemeParams<T = f64> {
    /// Fetch-then-deliver through an uplink/downlink tandem split by `beta`.
    Conventional { beta: T },
    /// Round-robin cache updater on `beta` of the band, cached delivery on the rest.
    Rsuc { beta: T },
    /// Shared channel; a request for item `s` triggers a fetch with `update_prob[s]`.
    Rea { update_prob: Vec<T> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Conventional,
    Rsuc,
    Rea,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Conventional => "conventional",
            SchemeKind::Rsuc => "rsuc",
            SchemeKind::Rea => "rea",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" | "conv" => Ok(SchemeKind::Conventional),
            "rsuc" => Ok(SchemeKind::Rsuc),
            "rea" => Ok(SchemeKind::Rea),
            other => Err(Error::invalid(
                "scheme",
                format!("unknown scheme `{other}` (conventional, rsuc, rea)"),
            )),
        }
    }
}

impl<T: Real> SchemeParams<T> {
    pub fn kind(&self) -> SchemeKind {
        match self {
            SchemeParams::Conventional { .. } => SchemeKind::Conventional,
            SchemeParams::Rsuc { .. } => SchemeKind::Rsuc,
            SchemeParams::Rea { .. } => SchemeKind::Rea,
        }
    }

    pub fn beta(&self) -> Option<T> {
        match self {
            SchemeParams::Conventional { beta } | SchemeParams::Rsuc { beta } => Some(*beta),
            SchemeParams::Rea { .. } => None,
        }
    }

    pub fn validate(&self, items: usize) -> Result<()> {
        match self {
            SchemeParams::Conventional { beta } | SchemeParams::Rsuc { beta } => {
                unit_interval("beta", *beta)
            }
            SchemeParams::Rea { update_prob } => {
                if update_prob.len() != items {
                    return Err(Error::invalid(
                        "update_prob",
                        format!("{} probabilities for {items} items", update_prob.len()),
                    ));
                }
                update_prob
                    .iter()
                    .try_for_each(|&p| unit_interval("update_prob", p))
            }
        }
    }

    /// Request-rate-weighted mean update probability; 1 for conventional,
    /// `None` for RSUC where updates are not request driven.
    pub fn update_ratio(&self, scenario: &Scenario<T>) -> Option<T> {
        match self {
            SchemeParams::Conventional { .. } => Some(T::one()),
            SchemeParams::Rsuc { .. } => None,
            SchemeParams::Rea { update_prob } => Some(update_ratio(scenario, update_prob)),
        }
    }
}

/// `P = sum(p_s * lambda_s) / Lambda`, or 0 when there is no traffic.
pub fn update_ratio<T: Real>(scenario: &Scenario<T>, update_prob: &[T]) -> T {
    let total = scenario.total_lambda();
    if total <= T::zero() {
        return T::zero();
    }
    let weighted = scenario
        .lambda_s
        .iter()
        .zip(update_prob)
        .fold(T::zero(), |acc, (&l, &p)| acc + l * p);
    weighted / total
}

/// Mean latency / AoI pair with confidence half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerfPoint {
    pub mean_latency: f64,
    pub mean_aoi: f64,
    pub latency_ci95: f64,
    pub aoi_ci95: f64,
    pub n_delivered: u64,
}

impl PerfPoint {
    pub fn analytic(latency: f64, aoi: f64) -> Self {
        Self {
            mean_latency: latency,
            mean_aoi: aoi,
            ..Self::default()
        }
    }
}

pub(crate) fn positive_finite<T: Real>(name: &'static str, x: T) -> Result<()> {
    if x > T::zero() && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {x}")))
    }
}

pub(crate) fn unit_interval<T: Real>(name: &'static str, x: T) -> Result<()> {
    if x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in [0, 1], got {x}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn radio_examples() {
        let unit = RadioParams {
            bandwidth_b: 24e6,
            content_size_l: 24000.0,
            sinr_ul: 1.0,
            sinr_dl: 1.0,
        };
        let r = rates_from_radio(&unit).unwrap();
        assert!(close(r.r_ul, 1000.0, 1e-9) && close(r.r_dl, 1000.0, 1e-9));

        let asym = RadioParams {
            bandwidth_b: 500.0,
            content_size_l: 1.0,
            sinr_ul: 3.0,
            sinr_dl: 1.0,
        };
        let r = rates_from_radio(&asym).unwrap();
        assert!(close(r.r_ul, 1000.0, 1e-9) && close(r.r_dl, 500.0, 1e-9));

        let half = RadioParams {
            bandwidth_b: 1000.0,
            content_size_l: 1.0,
            sinr_ul: 0.5,
            sinr_dl: 1.0,
        };
        // 1000 * ln(1.5) / ln(2)
        assert!(close(rates_from_radio(&half).unwrap().r_ul, 584.962500721156, 1e-9));
    }

    #[test]
    fn radio_rejects_non_positive() {
        let bad = RadioParams {
            bandwidth_b: 1.0,
            content_size_l: 0.0,
            sinr_ul: 1.0,
            sinr_dl: 1.0,
        };
        match rates_from_radio(&bad) {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "content_size_l"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(
            popularity_weights::<f64>(&Popularity::Uniform, 4).unwrap(),
            vec![0.25; 4]
        );
        let flat = popularity_weights(&Popularity::Zipf { theta: 0.0 }, 3).unwrap();
        assert!(flat.iter().all(|w| close(*w, 1.0 / 3.0, 1e-15)));

        let z = popularity_weights(&Popularity::Zipf { theta: 0.56 }, 2).unwrap();
        let second = 2f64.powf(-0.56);
        assert!(close(z[0], 1.0 / (1.0 + second), 1e-15));
        assert!(close(z[0], 0.595840, 1e-6) && close(z[1], 0.404160, 1e-6));
    }

    #[test]
    fn explicit_weights_errors() {
        assert!(popularity_weights(&Popularity::Explicit(vec![1.0, 2.0]), 3).is_err());
        assert!(popularity_weights(&Popularity::Explicit(vec![1.0, -2.0]), 2).is_err());
        assert!(popularity_weights(&Popularity::Explicit(vec![0.0, 0.0]), 2).is_err());
        let w = popularity_weights(&Popularity::Explicit(vec![3.0, 1.0]), 2).unwrap();
        assert_eq!(w, vec![0.75, 0.25]);
    }

    #[test]
    fn popularity_text_form() {
        for text in ["uniform", "zipf:0.56", "explicit:1,2.5,3"] {
            let p: Popularity = text.parse().unwrap();
            assert_eq!(p.to_string(), text);
        }
        assert!("zipf".parse::<Popularity>().is_err());
        assert!("pareto:1".parse::<Popularity>().is_err());
    }

    #[test]
    fn scenario_expansion_and_ratio() {
        let rates = ChannelRates::new(1000.0, 1000.0).unwrap();
        let sc = Scenario::from_popularity(rates, 200.0, &Popularity::Uniform, 4).unwrap();
        assert_eq!(sc.lambda_s, vec![50.0; 4]);
        assert!(close(sc.total_lambda(), 200.0, 1e-12));
        let scheme = SchemeParams::Rea {
            update_prob: vec![0.3; 4],
        };
        assert!(close(scheme.update_ratio(&sc).unwrap(), 0.3, 1e-15));
        assert!(scheme.validate(4).is_ok());
        assert!(scheme.validate(3).is_err());
        assert!(SchemeParams::Rsuc { beta: 1.2 }.validate(1).is_err());

        let empty = Scenario::from_rates(rates, vec![0.0, 0.0]).unwrap();
        assert_eq!(update_ratio(&empty, &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn bad_rates_rejected() {
        assert!(ChannelRates::new(0.0, 1.0).is_err());
        assert!(ChannelRates::new(1.0, f64::INFINITY).is_err());
        assert!(ChannelRates::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn f32_weights() {
        let w = popularity_weights::<f32>(&Popularity::Zipf { theta: 0.56 }, 2).unwrap();
        assert!((w[0] - 0.595840).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn weights_are_a_distribution(theta in 0.0f64..3.0, items in 1usize..300) {
            for pop in [Popularity::Uniform, Popularity::Zipf { theta }] {
                let w = popularity_weights(&pop, items).unwrap();
                prop_assert_eq!(w.len(), items);
                prop_assert!(w.iter().all(|x| *x >= 0.0));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            let z = popularity_weights(&Popularity::Zipf { theta }, items).unwrap();
            prop_assert!(z.windows(2).all(|p| p[0] >= p[1]));
        }

        #[test]
        fn radio_rates_monotone(
            b in 1.0f64..1e7, l in 1.0f64..1e5, g in 0.01f64..100.0, dg in 0.01f64..10.0
        ) {
            let base = RadioParams { bandwidth_b: b, content_size_l: l, sinr_ul: g, sinr_dl: g };
            let r0 = rates_from_radio(&base).unwrap();
            let more_sinr = rates_from_radio(&RadioParams { sinr_ul: g + dg, sinr_dl: g + dg, ..base }).unwrap();
            let more_b = rates_from_radio(&RadioParams { bandwidth_b: b * 1.5, ..base }).unwrap();
            let more_l = rates_from_radio(&RadioParams { content_size_l: l * 1.5, ..base }).unwrap();
            prop_assert!(more_sinr.r_ul > r0.r_ul && more_sinr.r_dl > r0.r_dl);
            prop_assert!(more_b.r_ul > r0.r_ul);
            prop_assert!(more_l.r_dl < r0.r_dl);
        }
    }
}
