//! Session event log.
//!
//! Serialized as JSON lines, one event per line, fields in declaration
//! order with the `event` tag first:
//!
//! | event                 | fields                                                   |
//! |-----------------------|----------------------------------------------------------|
//! | `session_start`       | policy, buffer_capacity_s, critical_threshold_s, chunk_count, chunk_duration_s, trace_looped |
//! | `fetch_issued`        | time, chunk, level, buffer_s, ebw_kbps, alpha, reason    |
//! | `download_complete`   | time, chunk, level, send_time, volume_kilobits, cbw_kbps |
//! | `playback_start`      | time                                                     |
//! | `chunk_display_start` | time, chunk, level                                       |
//! | `stall`               | time                                                     |
//! | `resume`              | time                                                     |
//! | `session_end`         | time                                                     |
//! | `truncated`           | time, chunk, diagnostic                                  |

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abr::{PolicyId, Reason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    SessionStart {
        policy: PolicyId,
        buffer_capacity_s: f64,
        critical_threshold_s: f64,
        chunk_count: usize,
        chunk_duration_s: f64,
        trace_looped: bool,
    },
    FetchIssued {
        time: f64,
        chunk: usize,
        level: usize,
        buffer_s: f64,
        ebw_kbps: f64,
        alpha: f64,
        reason: Reason,
    },
    DownloadComplete {
        time: f64,
        chunk: usize,
        level: usize,
        send_time: f64,
        volume_kilobits: f64,
        cbw_kbps: f64,
    },
    PlaybackStart {
        time: f64,
    },
    ChunkDisplayStart {
        time: f64,
        chunk: usize,
        level: usize,
    },
    Stall {
        time: f64,
    },
    Resume {
        time: f64,
    },
    SessionEnd {
        time: f64,
    },
    Truncated {
        time: f64,
        chunk: usize,
        diagnostic: String,
    },
}

impl Event {
    pub fn time(&self) -> Option<f64> {
        match self {
            Event::SessionStart { .. } => None,
            Event::FetchIssued { time, .. }
            | Event::DownloadComplete { time, .. }
            | Event::PlaybackStart { time }
            | Event::ChunkDisplayStart { time, .. }
            | Event::Stall { time }
            | Event::Resume { time }
            | Event::SessionEnd { time }
            | Event::Truncated { time, .. } => Some(*time),
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionEventLog {
    pub events: Vec<Event>,
}

impl SessionEventLog {
    pub fn is_truncated(&self) -> bool {
        matches!(self.events.last(), Some(Event::Truncated { .. }))
    }

    pub fn end_time(&self) -> Option<f64> {
        self.events.iter().rev().find_map(Event::time)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, LogError> {
        let mut events = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line).map_err(|source| LogError::Parse {
                line: n + 1,
                source,
            })?;
            events.push(event);
        }
        Ok(Self { events })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        Self::read_jsonl(text.as_bytes())
    }
}
