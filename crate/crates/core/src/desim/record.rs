use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One completed delivery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub item: usize,
    pub arrival_time: f64,
    /// Start of the downlink transmission to the vehicle.
    pub delivery_start: f64,
    pub delivery_complete: f64,
    pub content_generation_time: f64,
}

impl DeliveryRecord {
    pub fn latency(&self) -> f64 {
        self.delivery_complete - self.arrival_time
    }

    pub fn aoi(&self) -> f64 {
        self.delivery_complete - self.content_generation_time
    }
}

pub const RECORD_HEADER: [&str; 7] = [
    "item",
    "arrival_time",
    "delivery_start",
    "delivery_complete",
    "content_generation_time",
    "latency",
    "aoi",
];

/// CSV stream of delivery records, times written with 12 significant digits.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(RECORD_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &DeliveryRecord) -> Result<()> {
        let t = |x: f64| format!("{x:.11e}");
        self.inner.write_record([
            r.item.to_string(),
            t(r.arrival_time),
            t(r.delivery_start),
            t(r.delivery_complete),
            t(r.content_generation_time),
            t(r.latency()),
            t(r.aoi()),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| crate::error::Error::Io(e.into_error()))
    }
}
