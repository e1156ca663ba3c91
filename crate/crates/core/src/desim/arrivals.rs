use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant aggregate request rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalTrace {
    /// `(start_time, lambda_total)`; each rate holds until the next start.
    segments: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    time: f64,
    lambda: f64,
}

impl ArrivalTrace {
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self> {
        let Some(&(first, _)) = segments.first() else {
            return Err(Error::Trace("trace has no segments".into()));
        };
        if first != 0.0 {
            return Err(Error::Trace(format!("first segment starts at {first}, not 0")));
        }
        for (i, w) in segments.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) || !w[1].0.is_finite() {
                return Err(Error::Trace(format!(
                    "start times not strictly increasing at row {}",
                    i + 2
                )));
            }
        }
        if let Some((t, l)) = segments.iter().find(|(_, l)| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::Trace(format!("rate {l} at time {t} is not a finite value >= 0")));
        }
        Ok(Self { segments })
    }

    pub fn constant(lambda_total: f64) -> Result<Self> {
        Self::new(vec![(0.0, lambda_total)])
    }

    /// Reads CSV with header `time,lambda`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time", "lambda"] {
            return Err(Error::Trace(format!(
                "expected header `time,lambda`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let segments = reader
            .deserialize::<TraceRow>()
            .map(|row| row.map(|r| (r.time, r.lambda)).map_err(|e| Error::Trace(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(segments)
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|&(s, _)| s <= t);
        self.segments[idx.saturating_sub(1)].1
    }

    /// Bucket boundaries `[start_i, start_{i+1})`, the last one ending at `horizon`.
    pub fn buckets(&self, horizon: f64) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .segments
            .windows(2)
            .map(|w| (w[0].0, w[1].0))
            .filter(|&(s, _)| s < horizon)
            .map(|(s, e)| (s, e.min(horizon)))
            .collect();
        let last = self.segments.last().expect("nonempty").0;
        if last < horizon {
            out.push((last, horizon));
        }
        out
    }

    /// Time at which the integrated rate starting from `from` reaches
    /// `mass`, or `None` if the remaining trace never accumulates it.
    pub fn advance(&self, from: f64, mut mass: f64) -> Option<f64> {
        let mut idx = self.segments.partition_point(|&(s, _)| s <= from).saturating_sub(1);
        let mut t = from;
        loop {
            let rate = self.segments[idx].1;
            let end = self.segments.get(idx + 1).map_or(f64::INFINITY, |s| s.0);
            if rate > 0.0 {
                let available = (end - t) * rate;
                if mass <= available {
                    return Some(t + mass / rate);
                }
                mass -= available;
            }
            if end.is_infinite() {
                return None;
            }
            t = end;
            idx += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_query() {
        let csv = "time,lambda\n0,100\n10,0\n20,300\n";
        let tr = ArrivalTrace::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(tr.rate_at(5.0), 100.0);
        assert_eq!(tr.rate_at(10.0), 0.0);
        assert_eq!(tr.rate_at(25.0), 300.0);
        assert_eq!(tr.buckets(30.0), vec![(0.0, 10.0), (10.0, 20.0), (20.0, 30.0)]);
        assert_eq!(tr.buckets(15.0), vec![(0.0, 10.0), (10.0, 15.0)]);
        // 100 /s for 5 s from t=5 exhausts the first segment, then skips the gap.
        assert!((tr.advance(5.0, 500.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((tr.advance(5.0, 800.0).unwrap() - 21.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_traces() {
        for bad in [
            "time,lambda\n1,100\n",
            "time,lambda\n0,100\n0,50\n",
            "time,lambda\n0,-1\n",
            "t,l\n0,1\n",
            "time,lambda\n",
            "time,lambda\n0,abc\n",
        ] {
            assert!(ArrivalTrace::from_csv(bad.as_bytes()).is_err(), "{bad}");
        }
    }

    #[test]
    fn trailing_zero_rate_ends_arrivals() {
        let tr = ArrivalTrace::new(vec![(0.0, 10.0), (1.0, 0.0)]).unwrap();
        assert!(tr.advance(0.5, 100.0).is_none());
    }
}
