//! Deterministic discrete-event DASH client.
//!
//! One download is in flight at a time. A fetch is issued as soon as the
//! buffer has room for another chunk (`capacity - buffer >= chunk
//! duration`): right after a download completes if there is room, otherwise
//! at the instant playback drains the buffer down to `capacity - chunk
//! duration`. The buffer holds seconds of content, grows by a whole chunk
//! when a download completes and drains at 1 s/s while playing.
//!
//! Between events everything is linear, so the engine jumps from event to
//! event: download completions, the fetch-gate milestone and chunk
//! playback boundaries. Simultaneous events resolve in that order.

mod event;
mod replay;

use std::borrow::Cow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abr::{Observation, PolicyId, PolicyParams, PolicyState};
use crate::estimators::{EstimatorError, SsimVariationHistory, ThroughputHistory};
use crate::manifest::{ManifestError, VideoManifest};
use crate::metrics::{session_metrics, SessionReport};
use crate::trace::{BandwidthTrace, TraceError};

pub use event::{Event, LogError, SessionEventLog};
pub use replay::{replay_check, replay_diagnose, ReplayError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("session config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub buffer_capacity_s: f64,
    pub critical_threshold_s: f64,
    /// Chunks buffered before playback first starts.
    pub startup_chunks: usize,
    /// Chunks buffered before playback resumes after a stall.
    pub resume_chunks: usize,
    pub loop_trace: bool,
    pub policy: PolicyId,
    pub policy_params: PolicyParams,
    /// Absolute slack (seconds) for time and buffer comparisons.
    pub tolerance_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            buffer_capacity_s: 120.0,
            critical_threshold_s: 12.0,
            startup_chunks: 1,
            resume_chunks: 1,
            loop_trace: true,
            policy: PolicyId::Sba,
            policy_params: PolicyParams::default(),
            tolerance_s: 1e-9,
        }
    }
}

impl SessionConfig {
    pub fn new(policy: PolicyId, buffer_capacity_s: f64, critical_threshold_s: f64) -> Self {
        Self {
            policy,
            buffer_capacity_s,
            critical_threshold_s,
            ..Self::default()
        }
    }

    /// Parses a TOML session config; absent keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        Ok(toml::from_str(text)?)
    }

    pub fn validate(&self, manifest: &VideoManifest) -> Result<(), SimError> {
        let bs = self.buffer_capacity_s;
        let lc = self.critical_threshold_s;
        let t = manifest.chunk_duration();
        if !(lc > 0.0 && lc < bs) {
            return Err(SimError::Config(format!(
                "need 0 < critical threshold ({lc}) < buffer capacity ({bs})"
            )));
        }
        if bs < t {
            return Err(SimError::Config(format!(
                "buffer capacity {bs}s is shorter than one chunk ({t}s)"
            )));
        }
        let max_chunks = (bs / t + self.tolerance_s).floor() as usize;
        for (name, n) in [
            ("startup_chunks", self.startup_chunks),
            ("resume_chunks", self.resume_chunks),
        ] {
            if n == 0 || n > max_chunks {
                return Err(SimError::Config(format!(
                    "{name} must be between 1 and {max_chunks}, got {n}"
                )));
            }
        }
        if self.tolerance_s.is_nan() || self.tolerance_s < 0.0 {
            return Err(SimError::Config("tolerance_s must be >= 0".into()));
        }
        let bba = &self.policy_params.bba;
        if !(0.0 <= bba.reservoir_fraction
            && bba.reservoir_fraction < bba.cushion_fraction
            && bba.cushion_fraction <= 1.0)
        {
            return Err(SimError::Config(
                "need 0 <= bba.reservoir_fraction < bba.cushion_fraction <= 1".into(),
            ));
        }
        let osmf = &self.policy_params.osmf;
        if !(osmf.switch_down_ratio > 0.0 && osmf.switch_down_ratio <= osmf.switch_up_ratio) {
            return Err(SimError::Config(
                "need 0 < osmf.switch_down_ratio <= osmf.switch_up_ratio".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub log: SessionEventLog,
    pub report: SessionReport,
}

#[derive(Debug, Clone, Copy)]
enum Playback {
    Waiting,
    Playing { chunk: usize, since: f64 },
    Stalled { next: usize },
    Finished,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    chunk: usize,
    level: usize,
    send_time: f64,
    finish_time: f64,
    volume: f64,
}

/// Playback position in seconds of content.
pub(crate) fn position(playback_chunk: usize, since: f64, now: f64, chunk_duration: f64) -> f64 {
    playback_chunk as f64 * chunk_duration + (now - since)
}

struct Engine<'a> {
    manifest: &'a VideoManifest,
    trace: &'a BandwidthTrace,
    config: &'a SessionConfig,
    now: f64,
    downloaded: usize,
    playback: Playback,
    in_flight: Option<InFlight>,
    throughput: ThroughputHistory,
    variation: SsimVariationHistory,
    policy: PolicyState,
    events: Vec<Event>,
}

enum Next {
    Download,
    Gate,
    Boundary,
}

impl<'a> Engine<'a> {
    fn chunk_duration(&self) -> f64 {
        self.manifest.chunk_duration()
    }

    fn buffer(&self) -> f64 {
        let t = self.chunk_duration();
        let played = match self.playback {
            Playback::Waiting => 0.0,
            Playback::Playing { chunk, since } => position(chunk, since, self.now, t),
            Playback::Stalled { next } => next as f64 * t,
            Playback::Finished => self.manifest.chunk_count() as f64 * t,
        };
        self.downloaded as f64 * t - played
    }

    fn next_chunk(&self) -> usize {
        self.variation.levels().len()
    }

    fn gate_open(&self) -> bool {
        self.config.buffer_capacity_s - self.buffer()
            >= self.chunk_duration() - self.config.tolerance_s
    }

    /// Decides and issues the next fetch. Returns false when the trace
    /// cannot deliver it and the session was truncated.
    fn issue_fetch(&mut self) -> Result<bool, SimError> {
        let chunk = self.next_chunk();
        let buffer_s = self.buffer();
        let obs = Observation {
            chunk,
            buffer_s,
            buffer_capacity_s: self.config.buffer_capacity_s,
            critical_s: self.config.critical_threshold_s,
            prev_level: self.variation.levels().last().copied(),
            ebw_kbps: self.throughput.current_ebw(self.manifest.ladder().lowest()),
            alpha: self.variation.alpha(),
            manifest: self.manifest,
        };
        let decision = self.policy.decide(&obs);
        self.variation.push_level(self.manifest, decision.level)?;
        let volume = self.manifest.chunk_volume(chunk, decision.level)?;
        self.events.push(Event::FetchIssued {
            time: self.now,
            chunk,
            level: decision.level,
            buffer_s,
            ebw_kbps: obs.ebw_kbps,
            alpha: obs.alpha,
            reason: decision.reason,
        });
        match self.trace.download_finish_time(self.now, volume) {
            Ok(finish_time) => {
                self.in_flight = Some(InFlight {
                    chunk,
                    level: decision.level,
                    send_time: self.now,
                    finish_time,
                    volume,
                });
                Ok(true)
            }
            Err(err @ TraceError::Unreachable { .. }) => {
                self.events.push(Event::Truncated {
                    time: self.now,
                    chunk,
                    diagnostic: err.to_string(),
                });
                Ok(false)
            }
            Err(err) => Err(err.into()),
        }
    }

    fn display(&mut self, chunk: usize) {
        self.playback = Playback::Playing {
            chunk,
            since: self.now,
        };
        self.events.push(Event::ChunkDisplayStart {
            time: self.now,
            chunk,
            level: self.variation.levels()[chunk],
        });
    }

    fn complete_download(&mut self) -> Result<(), SimError> {
        let dl = self.in_flight.take().expect("download in flight");
        let cbw = self
            .throughput
            .record_download(dl.send_time, dl.finish_time, dl.volume)?;
        self.policy.on_download(cbw, dl.finish_time - dl.send_time);
        self.downloaded += 1;
        self.events.push(Event::DownloadComplete {
            time: self.now,
            chunk: dl.chunk,
            level: dl.level,
            send_time: dl.send_time,
            volume_kilobits: dl.volume,
            cbw_kbps: cbw,
        });
        let k = self.manifest.chunk_count();
        match self.playback {
            Playback::Waiting if self.downloaded >= self.config.startup_chunks.min(k) => {
                self.events.push(Event::PlaybackStart { time: self.now });
                self.display(0);
            }
            Playback::Stalled { next }
                if self.downloaded - next >= self.config.resume_chunks.min(k - next) =>
            {
                self.events.push(Event::Resume { time: self.now });
                self.display(next);
            }
            _ => {}
        }
        Ok(())
    }

    /// Handles the end of the chunk currently on screen. Returns false once
    /// the last chunk has been shown.
    fn finish_chunk(&mut self, chunk: usize) -> bool {
        let next = chunk + 1;
        if next == self.manifest.chunk_count() {
            self.playback = Playback::Finished;
            self.events.push(Event::SessionEnd { time: self.now });
            false
        } else if next < self.downloaded {
            self.display(next);
            true
        } else {
            self.playback = Playback::Stalled { next };
            self.events.push(Event::Stall { time: self.now });
            true
        }
    }

    fn run(mut self) -> Result<SessionEventLog, SimError> {
        let t = self.chunk_duration();
        let k = self.manifest.chunk_count();
        let bs = self.config.buffer_capacity_s;
        self.events.push(Event::SessionStart {
            policy: self.config.policy,
            buffer_capacity_s: bs,
            critical_threshold_s: self.config.critical_threshold_s,
            chunk_count: k,
            chunk_duration_s: t,
            trace_looped: self.trace.is_looped(),
        });

        let mut at_gate = false;
        loop {
            if self.in_flight.is_none()
                && self.next_chunk() < k
                && (at_gate || self.gate_open())
                && !self.issue_fetch()?
            {
                break;
            }
            at_gate = false;

            let mut best: Option<(f64, Next)> = None;
            let mut consider = |time: f64, what: Next| {
                if best.as_ref().is_none_or(|(b, _)| time < *b) {
                    best = Some((time, what));
                }
            };
            if let Some(dl) = &self.in_flight {
                consider(dl.finish_time, Next::Download);
            }
            if let Playback::Playing { chunk, since } = self.playback {
                if self.in_flight.is_none() && self.next_chunk() < k {
                    // buffer reaches capacity - one chunk
                    let gate = since + (self.downloaded - chunk) as f64 * t - (bs - t);
                    consider(gate.max(self.now), Next::Gate);
                }
                consider(since + t, Next::Boundary);
            }
            let Some((time, what)) = best else {
                break;
            };
            self.now = time;
            match what {
                Next::Download => self.complete_download()?,
                Next::Gate => at_gate = true,
                Next::Boundary => {
                    let Playback::Playing { chunk, .. } = self.playback else {
                        unreachable!("boundary only scheduled while playing")
                    };
                    if !self.finish_chunk(chunk) {
                        break;
                    }
                }
            }
        }
        Ok(SessionEventLog {
            events: self.events,
        })
    }
}

/// Simulates one streaming session and computes its report.
pub fn run_session(
    manifest: &VideoManifest,
    trace: &BandwidthTrace,
    config: &SessionConfig,
) -> Result<SessionOutcome, SimError> {
    config.validate(manifest)?;
    let trace: Cow<'_, BandwidthTrace> = if trace.is_looped() == config.loop_trace {
        Cow::Borrowed(trace)
    } else {
        Cow::Owned(trace.clone().with_loop(config.loop_trace)?)
    };
    let engine = Engine {
        manifest,
        trace: &trace,
        config,
        now: 0.0,
        downloaded: 0,
        playback: Playback::Waiting,
        in_flight: None,
        throughput: ThroughputHistory::new(),
        variation: SsimVariationHistory::new(),
        policy: PolicyState::new(config.policy, &config.policy_params, config.buffer_capacity_s),
        events: Vec::new(),
    };
    let log = engine.run()?;
    let report = session_metrics(&log, manifest).expect("engine emits well-formed logs");
    Ok(SessionOutcome { log, report })
}
