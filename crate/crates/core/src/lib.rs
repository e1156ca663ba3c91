//! Closed-form analysis, optimization and discrete-event simulation of
//! freshness-aware caching at a roadside unit (RSU).
//!
//! Three service schemes are modeled:
//!
//! * **conventional**: every request is fetched from the publisher over the
//!   uplink and then delivered over the downlink (tandem M/M/1 queues);
//! * **RSUC**: a round-robin updater refreshes the cache on a fraction
//!   `beta` of the band while requests are served from cache on the rest;
//! * **ReA**: a request for item `s` triggers a fetch with probability
//!   `p_s`, otherwise it is served from cache (M/G/1 on the full band).
//!
//! [`analytic`] and [`optimize`] are generic over [`Real`]; [`desim`] and
//! [`experiments`] run in `f64`.

pub mod analytic;
pub mod config;
pub mod desim;
pub mod error;
pub mod experiments;
pub mod model;
pub mod optimize;
pub mod scalar;

pub use error::{Error, Queue, Result};
pub use model::{
    popularity_weights, rates_from_radio, ChannelRates, PerfPoint, Popularity, RadioParams, Scenario,
    SchemeKind, SchemeParams,
};
pub use scalar::Real;

pub type ChannelRates64 = ChannelRates<f64>;
pub type ChannelRates32 = ChannelRates<f32>;
pub type Scenario64 = Scenario<f64>;
pub type Scenario32 = Scenario<f32>;
pub type SchemeParams64 = SchemeParams<f64>;
pub type SchemeParams32 = SchemeParams<f32>;
