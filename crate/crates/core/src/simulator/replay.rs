//! Re-derives every logged quantity from the log itself and the manifest.
//!
//! Consumed bandwidths come from logged send/finish times and manifest
//! volumes, estimates and SSIM variation from those, buffer levels from
//! the playback timeline, and each decision from a fresh policy state fed
//! with the recomputed history. Any disagreement beyond tolerance fails
//! the check.

use thiserror::Error;

use super::{position, Event, SessionConfig, SessionEventLog};
use crate::abr::{Observation, PolicyState};
use crate::estimators::{SsimVariationHistory, ThroughputHistory};
use crate::manifest::VideoManifest;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("event log is empty")]
    Empty,
    #[error("event log must begin with session_start")]
    MissingHeader,
    #[error("event {index}: {reason}")]
    Corrupt { index: usize, reason: String },
}

/// Relative tolerance on bandwidth figures.
const RATE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
enum Playback {
    Waiting,
    Starting,
    Playing { chunk: usize, since: f64 },
    Stalled { next: usize },
    Resuming { next: usize },
    Finished,
}

struct Replayer<'a> {
    manifest: &'a VideoManifest,
    config: &'a SessionConfig,
    tol: f64,
    throughput: ThroughputHistory,
    variation: SsimVariationHistory,
    policy: PolicyState,
    downloaded: usize,
    pending: Option<(usize, usize, f64)>,
    last_completion: f64,
    playback: Playback,
    now: f64,
    mismatches: Vec<String>,
    ended: bool,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn close_rel(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATE_RTOL * a.abs().max(b.abs()).max(1.0)
}

impl Replayer<'_> {
    fn fail(&mut self, index: usize, msg: String) {
        self.mismatches.push(format!("event {index}: {msg}"));
    }

    fn chunk_duration(&self) -> f64 {
        self.manifest.chunk_duration()
    }

    fn buffer(&self, now: f64) -> f64 {
        let t = self.chunk_duration();
        let played = match self.playback {
            Playback::Waiting | Playback::Starting => 0.0,
            Playback::Playing { chunk, since } => position(chunk, since, now, t),
            Playback::Stalled { next } | Playback::Resuming { next } => next as f64 * t,
            Playback::Finished => self.manifest.chunk_count() as f64 * t,
        };
        self.downloaded as f64 * t - played
    }

    fn step(&mut self, index: usize, event: &Event) -> Result<(), ReplayError> {
        let corrupt = |reason: String| ReplayError::Corrupt { index, reason };
        if self.ended {
            return Err(corrupt("event after end of session".into()));
        }
        let k = self.manifest.chunk_count();
        let t = self.chunk_duration();
        let time = event.time().ok_or_else(|| corrupt("duplicate session_start".into()))?;
        if time < self.now {
            self.fail(index, format!("time {time} goes backwards from {}", self.now));
        }
        if let Playback::Playing { since, .. } = self.playback {
            if time > since + t + self.tol {
                self.fail(index, format!("time {time} skips past a playback boundary at {}", since + t));
            }
        }
        self.now = time;

        match event {
            Event::SessionStart { .. } => unreachable!(),
            &Event::FetchIssued {
                time,
                chunk,
                level,
                buffer_s,
                ebw_kbps,
                alpha,
                reason,
            } => {
                if self.pending.is_some() {
                    self.fail(index, "fetch while another download is in flight".into());
                }
                let expected_chunk = self.variation.levels().len();
                if chunk != expected_chunk {
                    return Err(corrupt(format!("fetch of chunk {chunk}, expected {expected_chunk}")));
                }
                if chunk >= k {
                    return Err(corrupt(format!("chunk {chunk} beyond manifest")));
                }
                if level >= self.manifest.level_count() {
                    return Err(corrupt(format!("level {level} beyond ladder")));
                }
                let b = self.buffer(time);
                if !close(b, buffer_s, self.tol) {
                    self.fail(index, format!("buffer {buffer_s}, recomputed {b}"));
                }
                let room = self.config.buffer_capacity_s - b;
                if room < t - self.tol {
                    self.fail(index, format!("fetch issued with only {room}s of room"));
                }
                // issued either at a completion or exactly when room opened up
                let after_completion = chunk == 0 || close(time, self.last_completion, self.tol);
                if !after_completion && room > t + self.tol {
                    self.fail(index, format!("fetch at {time} later than the gate allowed"));
                }
                let ebw = self.throughput.current_ebw(self.manifest.ladder().lowest());
                if !close_rel(ebw, ebw_kbps) {
                    self.fail(index, format!("ebw {ebw_kbps}, recomputed {ebw}"));
                }
                let a = self.variation.alpha();
                if !close(a, alpha, self.tol) {
                    self.fail(index, format!("alpha {alpha}, recomputed {a}"));
                }
                let obs = Observation {
                    chunk,
                    buffer_s,
                    buffer_capacity_s: self.config.buffer_capacity_s,
                    critical_s: self.config.critical_threshold_s,
                    prev_level: self.variation.levels().last().copied(),
                    ebw_kbps,
                    alpha,
                    manifest: self.manifest,
                };
                let decision = self.policy.decide(&obs);
                if decision.level != level || decision.reason != reason {
                    self.fail(
                        index,
                        format!(
                            "decision ({level}, {reason:?}), recomputed ({}, {:?})",
                            decision.level, decision.reason
                        ),
                    );
                }
                self.variation
                    .push_level(self.manifest, level)
                    .map_err(|e| corrupt(e.to_string()))?;
                self.pending = Some((chunk, level, time));
            }
            &Event::DownloadComplete {
                time,
                chunk,
                level,
                send_time,
                volume_kilobits,
                cbw_kbps,
            } => {
                let Some((p_chunk, p_level, p_send)) = self.pending.take() else {
                    return Err(corrupt("completion without a fetch".into()));
                };
                if (chunk, level) != (p_chunk, p_level) || send_time != p_send {
                    self.fail(
                        index,
                        format!(
                            "completion ({chunk}, {level}, {send_time}) does not match fetch ({p_chunk}, {p_level}, {p_send})"
                        ),
                    );
                }
                match self.manifest.chunk_volume(p_chunk, p_level) {
                    Ok(v) if v == volume_kilobits => {}
                    Ok(v) => self.fail(index, format!("volume {volume_kilobits}, manifest {v}")),
                    Err(e) => return Err(corrupt(e.to_string())),
                }
                let before = self.throughput.len();
                match self.throughput.record_download(p_send, time, volume_kilobits) {
                    Ok(cbw) => {
                        if !close_rel(cbw, cbw_kbps) {
                            self.fail(index, format!("cbw {cbw_kbps}, recomputed {cbw}"));
                        }
                        self.policy.on_download(cbw, time - p_send);
                    }
                    Err(e) => self.fail(index, e.to_string()),
                }
                if self.throughput.len() == before {
                    return Ok(());
                }
                self.downloaded += 1;
                self.last_completion = time;
                match self.playback {
                    Playback::Waiting if self.downloaded >= self.config.startup_chunks.min(k) => {
                        self.playback = Playback::Starting;
                    }
                    Playback::Stalled { next }
                        if self.downloaded - next >= self.config.resume_chunks.min(k - next) =>
                    {
                        self.playback = Playback::Resuming { next };
                    }
                    _ => {}
                }
            }
            &Event::PlaybackStart { time } => {
                if !matches!(self.playback, Playback::Starting) || !close(time, self.last_completion, self.tol) {
                    self.fail(index, format!("unexpected playback start at {time}"));
                }
            }
            &Event::Resume { time } => {
                if !matches!(self.playback, Playback::Resuming { .. })
                    || !close(time, self.last_completion, self.tol)
                {
                    self.fail(index, format!("unexpected resume at {time}"));
                }
            }
            &Event::ChunkDisplayStart { time, chunk, level } => {
                let (expected, anchor) = match self.playback {
                    Playback::Starting => (0, self.last_completion),
                    Playback::Resuming { next } => (next, self.last_completion),
                    Playback::Playing { chunk, since } => (chunk + 1, since + t),
                    _ => {
                        return Err(corrupt("display while not playing".into()));
                    }
                };
                if chunk != expected || chunk >= self.downloaded {
                    return Err(corrupt(format!("display of chunk {chunk}, expected {expected}")));
                }
                if !close(time, anchor, self.tol) {
                    self.fail(index, format!("display of chunk {chunk} at {time}, expected {anchor}"));
                }
                if self.variation.levels()[chunk] != level {
                    self.fail(index, format!("displayed level {level} differs from fetched level"));
                }
                self.playback = Playback::Playing { chunk, since: time };
            }
            &Event::Stall { time } => match self.playback {
                Playback::Playing { chunk, since } => {
                    if !close(time, since + t, self.tol) {
                        self.fail(index, format!("stall at {time}, buffer empties at {}", since + t));
                    }
                    if chunk + 1 != self.downloaded || chunk + 1 >= k {
                        self.fail(index, "stall with content still buffered".into());
                    }
                    if self.pending.is_none() {
                        self.fail(index, "stall with no download in flight".into());
                    }
                    self.playback = Playback::Stalled { next: chunk + 1 };
                }
                _ => return Err(corrupt("stall while not playing".into())),
            },
            &Event::SessionEnd { time } => {
                match self.playback {
                    Playback::Playing { chunk, since } if chunk + 1 == k => {
                        if !close(time, since + t, self.tol) {
                            self.fail(index, format!("session end at {time}, expected {}", since + t));
                        }
                    }
                    _ => self.fail(index, "session end before the last chunk was shown".into()),
                }
                if self.pending.is_some() {
                    self.fail(index, "session end with a download in flight".into());
                }
                self.playback = Playback::Finished;
                self.ended = true;
            }
            Event::Truncated { time, chunk, .. } => match self.pending {
                Some((p_chunk, _, p_send)) if p_chunk == *chunk && close(*time, p_send, self.tol) => {
                    self.ended = true;
                }
                _ => {
                    self.fail(index, "truncation does not match the pending fetch".into());
                    self.ended = true;
                }
            },
        }
        Ok(())
    }
}

/// Lists every inconsistency found in `log`; empty means it replays cleanly.
/// Errors only when the log has no usable header.
pub fn replay_diagnose(
    log: &SessionEventLog,
    manifest: &VideoManifest,
    config: &SessionConfig,
) -> Result<Vec<String>, ReplayError> {
    let mut events = log.events.iter();
    let header = events.next().ok_or(ReplayError::Empty)?;
    let Event::SessionStart {
        policy,
        buffer_capacity_s,
        critical_threshold_s,
        chunk_count,
        chunk_duration_s,
        trace_looped,
    } = header
    else {
        return Err(ReplayError::MissingHeader);
    };
    let mut r = Replayer {
        manifest,
        config,
        tol: config.tolerance_s,
        throughput: ThroughputHistory::new(),
        variation: SsimVariationHistory::new(),
        policy: PolicyState::new(config.policy, &config.policy_params, config.buffer_capacity_s),
        downloaded: 0,
        pending: None,
        last_completion: 0.0,
        playback: Playback::Waiting,
        now: 0.0,
        mismatches: Vec::new(),
        ended: false,
    };
    if *policy != config.policy
        || *buffer_capacity_s != config.buffer_capacity_s
        || *critical_threshold_s != config.critical_threshold_s
        || *trace_looped != config.loop_trace
    {
        r.fail(0, "session header does not match the config".into());
    }
    if *chunk_count != manifest.chunk_count() || *chunk_duration_s != manifest.chunk_duration() {
        r.fail(0, "session header does not match the manifest".into());
    }
    for (i, event) in events.enumerate() {
        if let Err(e) = r.step(i + 1, event) {
            // nothing after a structural break can be checked meaningfully
            r.mismatches.push(e.to_string());
            return Ok(r.mismatches);
        }
    }
    if !r.ended {
        r.fail(log.events.len(), "log ends without session_end or truncation".into());
    }
    Ok(r.mismatches)
}

/// True iff every decision and estimator value in the log is reproduced.
pub fn replay_check(
    log: &SessionEventLog,
    manifest: &VideoManifest,
    config: &SessionConfig,
) -> Result<bool, ReplayError> {
    Ok(replay_diagnose(log, manifest, config)?.is_empty())
}
