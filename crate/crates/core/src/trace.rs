//! Piecewise-constant bandwidth traces.
//!
//! A trace is a list of `(timestamp_s, bandwidth_kbps)` samples; each sample
//! holds until the next one. A non-looping trace holds its final sample
//! forever, so end a capture with a `0` sample to model the network going
//! away. A looping trace repeats with period `last_timestamp + last_gap`,
//! i.e. the final sample lasts as long as the gap before it (1 s for a
//! single-sample trace).
//!
//! Volumes are kilobits and rates kbps, so `volume / rate` is seconds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("trace has no samples")]
    Empty,
    #[error("sample {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("volume of {volume} kilobits unreachable from t={start}s: trace delivers only {available} kilobits before bandwidth drops to 0 for good")]
    Unreachable {
        start: f64,
        volume: f64,
        available: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time_s: f64,
    pub kbps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthTrace {
    samples: Vec<Sample>,
    looped: bool,
    /// `prefix[k]` = kilobits delivered over `[0, samples[k].time_s]`.
    prefix: Vec<f64>,
    period: f64,
}

impl BandwidthTrace {
    pub fn new(samples: Vec<Sample>, looped: bool) -> Result<Self, TraceError> {
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        for (index, s) in samples.iter().enumerate() {
            if !s.time_s.is_finite() || !s.kbps.is_finite() {
                return Err(TraceError::Invalid {
                    index,
                    reason: "non-finite value".into(),
                });
            }
            if s.kbps < 0.0 {
                return Err(TraceError::Invalid {
                    index,
                    reason: format!("negative bandwidth {}", s.kbps),
                });
            }
            if index == 0 && s.time_s != 0.0 {
                return Err(TraceError::Invalid {
                    index,
                    reason: format!("first timestamp must be 0, got {}", s.time_s),
                });
            }
            if index > 0 && s.time_s <= samples[index - 1].time_s {
                return Err(TraceError::Invalid {
                    index,
                    reason: format!(
                        "timestamps must be strictly increasing ({} then {})",
                        samples[index - 1].time_s,
                        s.time_s
                    ),
                });
            }
        }
        if looped && samples.iter().all(|s| s.kbps == 0.0) {
            return Err(TraceError::Invalid {
                index: 0,
                reason: "a looping trace needs at least one positive sample".into(),
            });
        }

        let n = samples.len();
        let last_gap = if n > 1 {
            samples[n - 1].time_s - samples[n - 2].time_s
        } else {
            1.0
        };
        let period = samples[n - 1].time_s + last_gap;
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for k in 1..n {
            let seg = (samples[k].time_s - samples[k - 1].time_s) * samples[k - 1].kbps;
            prefix.push(prefix[k - 1] + seg);
        }
        // prefix[n] closes the period for looping traces
        prefix.push(prefix[n - 1] + last_gap * samples[n - 1].kbps);

        Ok(Self {
            samples,
            looped,
            prefix,
            period,
        })
    }

    /// Single-rate trace, convenient for tests and sanity runs.
    pub fn constant(kbps: f64) -> Self {
        Self::new(vec![Sample { time_s: 0.0, kbps }], kbps > 0.0)
            .expect("constant trace is valid")
    }

    pub fn with_loop(self, looped: bool) -> Result<Self, TraceError> {
        Self::new(self.samples, looped)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn is_looped(&self) -> bool {
        self.looped
    }

    /// Length of one loop iteration in seconds.
    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut samples = Vec::new();
        for (n, record) in reader.records().enumerate() {
            let record = record.map_err(|e| TraceError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(n as u64 + 1, |p| p.line());
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            if record.len() != 2 {
                return Err(TraceError::Parse {
                    line,
                    reason: format!("expected `timestamp_s,bandwidth_kbps`, got {} fields", record.len()),
                });
            }
            let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => samples.push(Sample {
                    time_s: v[0],
                    kbps: v[1],
                }),
                // a non-numeric first row is a header
                Err(_) if samples.is_empty() && n == 0 => continue,
                Err(e) => {
                    return Err(TraceError::Parse {
                        line,
                        reason: e.to_string(),
                    })
                }
            }
        }
        Self::new(samples, false)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp_s,bandwidth_kbps\n");
        for s in &self.samples {
            out.push_str(&format!("{},{}\n", s.time_s, s.kbps));
        }
        out
    }

    /// Segment index containing `t`, for `t` inside one period (or past the end).
    fn segment_at(&self, t: f64) -> usize {
        self.samples.partition_point(|s| s.time_s <= t) - 1
    }

    /// Kilobits delivered over `[0, t]` within the first period (or forever
    /// for non-looping traces).
    fn delivered_within(&self, t: f64) -> f64 {
        let k = self.segment_at(t);
        self.prefix[k] + (t - self.samples[k].time_s) * self.samples[k].kbps
    }

    /// Kilobits delivered over `[0, t]`.
    fn delivered(&self, t: f64) -> f64 {
        if !self.looped {
            return self.delivered_within(t);
        }
        let per_period = self.prefix[self.samples.len()];
        let laps = (t / self.period).floor();
        let rem = t - laps * self.period;
        laps * per_period + self.delivered_within(rem.max(0.0))
    }

    pub fn bandwidth_at(&self, t: f64) -> f64 {
        let t = if self.looped {
            t - (t / self.period).floor() * self.period
        } else {
            t
        };
        self.samples[self.segment_at(t.max(0.0))].kbps
    }

    /// Kilobits delivered over `[from, to]`.
    pub fn bits_transferred(&self, from: f64, to: f64) -> f64 {
        debug_assert!(from <= to, "interval [{from}, {to}] is reversed");
        if to <= from {
            return 0.0;
        }
        self.delivered(to) - self.delivered(from)
    }

    /// Smallest `t >= start` at which `volume` kilobits have been delivered.
    pub fn download_finish_time(&self, start: f64, volume: f64) -> Result<f64, TraceError> {
        debug_assert!(volume > 0.0);
        let mut target = self.delivered(start) + volume;
        let n = self.samples.len();

        let (base, within_target) = if self.looped {
            let per_period = self.prefix[n];
            let mut laps = (target / per_period).floor();
            let mut rest = target - laps * per_period;
            // landing exactly on a lap boundary: finish inside the previous lap
            if rest <= 0.0 && laps > 0.0 {
                laps -= 1.0;
                rest += per_period;
            }
            (laps * self.period, rest)
        } else {
            let total_defined = self.prefix[n - 1];
            let last = self.samples[n - 1];
            if target > total_defined && last.kbps == 0.0 {
                return Err(TraceError::Unreachable {
                    start,
                    volume,
                    available: (total_defined - self.delivered(start)).max(0.0),
                });
            }
            (0.0, target)
        };

        // first segment whose right edge reaches the target
        let upper = if self.looped { n } else { n - 1 };
        let k = self.prefix[1..=upper]
            .partition_point(|&p| p < within_target)
            .min(n - 1);
        let seg = self.samples[k];
        let offset = if seg.kbps > 0.0 {
            (within_target - self.prefix[k]) / seg.kbps
        } else {
            0.0
        };
        target = base + seg.time_s + offset.max(0.0);
        Ok(target.max(start))
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<BandwidthTrace, TraceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    BandwidthTrace::from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(points: &[(f64, f64)], looped: bool) -> BandwidthTrace {
        BandwidthTrace::new(
            points
                .iter()
                .map(|&(time_s, kbps)| Sample { time_s, kbps })
                .collect(),
            looped,
        )
        .unwrap()
    }

    #[test]
    fn parses_two_sample_csv() {
        let t = BandwidthTrace::from_csv("0,5000\n10,1000").unwrap();
        assert_eq!(t.samples().len(), 2);
        assert_eq!(t.samples()[1], Sample { time_s: 10.0, kbps: 1000.0 });
    }

    #[test]
    fn header_and_comments_tolerated() {
        let t = BandwidthTrace::from_csv("# capture A\ntimestamp_s,bandwidth_kbps\n0, 5000\n# mid\n10,1000\n")
            .unwrap();
        assert_eq!(t.samples().len(), 2);
    }

    #[test]
    fn out_of_order_timestamps_rejected() {
        assert!(BandwidthTrace::from_csv("0,100\n10,200\n5,300").is_err());
    }

    #[test]
    fn empty_and_negative_rejected() {
        assert!(matches!(BandwidthTrace::from_csv(""), Err(TraceError::Empty)));
        assert!(BandwidthTrace::from_csv("0,-5").is_err());
        assert!(BandwidthTrace::from_csv("1,5").is_err());
        assert!(BandwidthTrace::from_csv("0,5\nabc,4").is_err());
    }

    #[test]
    fn integrates_constant_segment() {
        let t = trace(&[(0.0, 5000.0), (10.0, 1000.0)], false);
        assert_eq!(t.bits_transferred(0.0, 10.0), 50_000.0);
        assert_eq!(t.bits_transferred(8.0, 12.0), 12_000.0);
        assert_eq!(t.bits_transferred(3.0, 3.0), 0.0);
    }

    #[test]
    fn constant_rate_finish_time() {
        let t = BandwidthTrace::constant(1000.0);
        assert_eq!(t.download_finish_time(0.0, 4000.0).unwrap(), 4.0);
    }

    #[test]
    fn piecewise_finish_time() {
        let t = trace(&[(0.0, 2000.0), (2.0, 500.0)], false);
        assert_eq!(t.download_finish_time(0.0, 5000.0).unwrap(), 4.0);
    }

    #[test]
    fn exhausted_trace_is_unreachable() {
        let t = trace(&[(0.0, 5000.0), (10.0, 0.0)], false);
        assert!(matches!(
            t.download_finish_time(0.0, 60_000.0),
            Err(TraceError::Unreachable { .. })
        ));
        assert_eq!(t.download_finish_time(0.0, 50_000.0).unwrap(), 10.0);
    }

    #[test]
    fn zero_gap_skips_outage() {
        let t = trace(&[(0.0, 1000.0), (1.0, 0.0), (5.0, 1000.0)], false);
        // 1000 by t=1, nothing until 5, then 500 more
        assert_eq!(t.download_finish_time(0.0, 1500.0).unwrap(), 5.5);
        // exactly the first segment: finishes before the outage, not after it
        assert_eq!(t.download_finish_time(0.0, 1000.0).unwrap(), 1.0);
        assert_eq!(t.download_finish_time(2.0, 100.0).unwrap(), 5.1);
    }

    #[test]
    fn looping_repeats_period() {
        let t = trace(&[(0.0, 5000.0), (10.0, 1000.0)], true);
        assert_eq!(t.period(), 20.0);
        let one = t.bits_transferred(0.0, 20.0);
        assert_eq!(one, 60_000.0);
        assert_eq!(t.bits_transferred(0.0, 60.0), 3.0 * one);
        // second lap starts fast again
        assert_eq!(t.download_finish_time(20.0, 5000.0).unwrap(), 21.0);
        assert_eq!(t.download_finish_time(0.0, 60_000.0).unwrap(), 20.0);
        assert_eq!(t.bandwidth_at(25.0), 5000.0);
        assert_eq!(t.bandwidth_at(35.0), 1000.0);
    }

    #[test]
    fn loop_requires_positive_sample() {
        assert!(BandwidthTrace::new(vec![Sample { time_s: 0.0, kbps: 0.0 }], true).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = trace(&[(0.0, 5000.5), (0.25, 1000.0), (7.0, 0.0)], false);
        assert_eq!(BandwidthTrace::from_csv(&t.to_csv()).unwrap(), t);
    }
}
