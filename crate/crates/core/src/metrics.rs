//! Session QoE metrics and their aggregation over a trace set.
//!
//! Per session: total mid-session stall time, number of level switches
//! between consecutively displayed chunks, and mean SSIM / bitrate over the
//! displayed chunks (all chunks last the same time, so plain means). The
//! wait for the first chunk is reported separately as the startup delay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abr::PolicyId;
use crate::manifest::VideoManifest;
use crate::simulator::{Event, SessionEventLog};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("event log has no session_start header")]
    MissingHeader,
    #[error("event log refers to chunk {chunk} level {level}, outside the manifest")]
    OutOfRange { chunk: usize, level: usize },
    #[error("no complete sessions to aggregate")]
    Empty,
    #[error("cannot aggregate sessions from different scenarios")]
    MixedGroup,
}

/// How level switches are weighted in the instability figure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstabilityMode {
    /// Every switch counts 1.
    #[default]
    Count,
    /// Every switch counts the number of ladder steps it spans.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayedChunk {
    pub chunk: usize,
    pub level: usize,
    pub ssim: f64,
    pub bitrate_kbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub policy: PolicyId,
    pub buffer_capacity_s: f64,
    pub critical_threshold_s: f64,
    pub trace_looped: bool,
    /// Truncated session; excluded from aggregates.
    pub partial: bool,
    pub rebuffering_total: f64,
    pub rebuffer_count: usize,
    pub instability: f64,
    pub mean_ssim: f64,
    pub mean_bitrate: f64,
    pub startup_delay: f64,
    pub session_duration: f64,
    pub displayed: Vec<DisplayedChunk>,
}

pub fn instability(levels: &[usize], mode: InstabilityMode) -> f64 {
    levels
        .windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| match mode {
            InstabilityMode::Count => 1.0,
            InstabilityMode::Magnitude => w[0].abs_diff(w[1]) as f64,
        })
        .sum()
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

pub fn session_metrics(
    log: &SessionEventLog,
    manifest: &VideoManifest,
) -> Result<SessionReport, MetricsError> {
    session_metrics_with(log, manifest, InstabilityMode::Count)
}

pub fn session_metrics_with(
    log: &SessionEventLog,
    manifest: &VideoManifest,
    mode: InstabilityMode,
) -> Result<SessionReport, MetricsError> {
    let Some(Event::SessionStart {
        policy,
        buffer_capacity_s,
        critical_threshold_s,
        trace_looped,
        ..
    }) = log.events.first()
    else {
        return Err(MetricsError::MissingHeader);
    };

    let mut displayed = Vec::new();
    let mut stall_open: Option<f64> = None;
    let mut rebuffering_total = 0.0;
    let mut rebuffer_count = 0;
    let mut startup_delay = None;
    for event in &log.events {
        match *event {
            Event::PlaybackStart { time } => startup_delay = Some(time),
            Event::ChunkDisplayStart { chunk, level, .. } => {
                let ssim = manifest
                    .ssim(chunk, level)
                    .map_err(|_| MetricsError::OutOfRange { chunk, level })?;
                displayed.push(DisplayedChunk {
                    chunk,
                    level,
                    ssim,
                    bitrate_kbps: manifest.ladder().rates()[level],
                });
            }
            Event::Stall { time } => {
                stall_open = Some(time);
                rebuffer_count += 1;
            }
            Event::Resume { time } => {
                if let Some(start) = stall_open.take() {
                    rebuffering_total += time - start;
                }
            }
            _ => {}
        }
    }

    let levels: Vec<usize> = displayed.iter().map(|d| d.level).collect();
    Ok(SessionReport {
        policy: *policy,
        buffer_capacity_s: *buffer_capacity_s,
        critical_threshold_s: *critical_threshold_s,
        trace_looped: *trace_looped,
        partial: log.is_truncated(),
        rebuffering_total,
        rebuffer_count,
        instability: instability(&levels, mode),
        mean_ssim: mean(displayed.iter().map(|d| d.ssim)),
        mean_bitrate: mean(displayed.iter().map(|d| d.bitrate_kbps)),
        startup_delay: startup_delay.unwrap_or(0.0),
        session_duration: log.end_time().unwrap_or(0.0),
        displayed,
    })
}

/// Means of the session metrics over one (policy, scenario) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub policy: PolicyId,
    pub buffer_capacity_s: f64,
    pub critical_threshold_s: f64,
    pub trace_count: usize,
    pub partial_excluded: usize,
    pub rebuffering_s: f64,
    pub rebuffer_count: f64,
    pub instability: f64,
    pub mean_ssim: f64,
    pub mean_bitrate_kbps: f64,
    pub startup_delay_s: f64,
}

/// Field-wise means over the complete sessions in `reports`.
pub fn aggregate(reports: &[SessionReport]) -> Result<AggregateReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::Empty)?;
    if reports.iter().any(|r| {
        r.policy != first.policy
            || r.buffer_capacity_s != first.buffer_capacity_s
            || r.critical_threshold_s != first.critical_threshold_s
    }) {
        return Err(MetricsError::MixedGroup);
    }
    let complete: Vec<&SessionReport> = reports.iter().filter(|r| !r.partial).collect();
    if complete.is_empty() {
        return Err(MetricsError::Empty);
    }
    let field = |f: fn(&SessionReport) -> f64| mean(complete.iter().map(|r| f(r)));
    Ok(AggregateReport {
        policy: first.policy,
        buffer_capacity_s: first.buffer_capacity_s,
        critical_threshold_s: first.critical_threshold_s,
        trace_count: complete.len(),
        partial_excluded: reports.len() - complete.len(),
        rebuffering_s: field(|r| r.rebuffering_total),
        rebuffer_count: field(|r| r.rebuffer_count as f64),
        instability: field(|r| r.instability),
        mean_ssim: field(|r| r.mean_ssim),
        mean_bitrate_kbps: field(|r| r.mean_bitrate),
        startup_delay_s: field(|r| r.startup_delay),
    })
}
