//! Random streams and the two sampling primitives of the simulator.
//!
//! Stream derivation: replication `r` of a run seeded with `seed` uses the key
//! `splitmix64(seed + r * 0x9E3779B97F4A7C15)`. Each purpose below gets
//! `ChaCha8Rng::seed_from_u64(key)` with `set_stream(purpose as u64)`, so
//! arrivals, item choice, uplink, downlink and update decisions never share
//! a sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Arrival = 0,
    Item = 1,
    Uplink = 2,
    Downlink = 3,
    Decision = 4,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_key(seed: u64, replication: u64) -> u64 {
    splitmix64(seed.wrapping_add(replication.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

pub fn stream(seed: u64, replication: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_key(seed, replication));
    rng.set_stream(purpose as u64);
    rng
}

pub(crate) struct Streams {
    pub arrival: ChaCha8Rng,
    pub item: ChaCha8Rng,
    pub uplink: ChaCha8Rng,
    pub downlink: ChaCha8Rng,
    pub decision: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64, replication: u64) -> Self {
        Self {
            arrival: stream(seed, replication, Purpose::Arrival),
            item: stream(seed, replication, Purpose::Item),
            uplink: stream(seed, replication, Purpose::Uplink),
            downlink: stream(seed, replication, Purpose::Downlink),
            decision: stream(seed, replication, Purpose::Decision),
        }
    }
}

/// Uniform on `(0, 1]`.
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Inverse transform `-mean * ln(u)`.
#[inline]
pub fn exponential_from_uniform(u: f64, mean: f64) -> f64 {
    mean * -u.ln() + 0.0
}

#[inline]
pub fn draw_exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    exponential_from_uniform(open_unit(rng), mean)
}

/// Categorical draw by linear scan; see [`ItemSampler`] for repeated use.
pub fn assign_item<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap at the top; take the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Cumulative-table categorical sampler.
#[derive(Debug, Clone)]
pub struct ItemSampler {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl ItemSampler {
    pub fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self {
            cumulative,
            last_positive: weights.iter().rposition(|&w| w > 0.0).unwrap_or(0),
        }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.cumulative.len() == 1 {
            return 0;
        }
        let u = rng.random::<f64>();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.last_positive)
    }
}
