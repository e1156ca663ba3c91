use std::fmt;

use thiserror::Error;

/// Queue or resource whose stability condition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Queue {
    Uplink,
    Downlink,
    /// The single shared server of the request-adaptive scheme.
    Shared,
    /// Uplink and downlink together under the best possible split.
    Tandem,
}

impl fmt::Display for Queue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Queue::Uplink => "uplink",
            Queue::Downlink => "downlink",
            Queue::Shared => "shared",
            Queue::Tandem => "uplink/downlink tandem",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{queue} queue overloaded: offered load {load} >= service rate {rate}")]
    Overload { queue: Queue, load: f64, rate: f64 },

    #[error("degenerate bandwidth split beta = {beta}: AoI is unbounded or nothing is delivered")]
    DegenerateSplit { beta: f64 },

    #[error("item {item} has update probability 0: AoI is unbounded")]
    UnboundedAoi { item: usize },

    #[error("AoI cap {cap} is below the achievable floor {floor}")]
    InfeasibleAoi { cap: f64, floor: f64 },

    #[error("AoI cap {cap} needs beta = {beta}, leaving downlink rate {rate} <= load {load}")]
    InfeasibleLoad {
        cap: f64,
        beta: f64,
        rate: f64,
        load: f64,
    },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors meaning "no feasible solution", as opposed to bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleAoi { .. } | Error::InfeasibleLoad { .. } | Error::UnboundedAoi { .. }
        )
    }

    pub fn is_overload(&self) -> bool {
        matches!(self, Error::Overload { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
