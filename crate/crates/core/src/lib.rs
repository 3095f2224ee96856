//! Trace-driven DASH streaming simulator.
//!
//! The crate models a VOD title as a bitrate ladder with a per-chunk,
//! per-level SSIM matrix ([`manifest`]), replays piecewise-constant
//! bandwidth traces ([`trace`]) through a single-connection DASH client
//! ([`simulator`]) driven by one of four rate-selection policies ([`abr`]),
//! and scores each session on rebuffering, instability, SSIM and bitrate
//! ([`metrics`]). [`batch`] runs policy × scenario × trace matrices and
//! writes the result tables.

pub mod abr;
pub mod batch;
pub mod estimators;
pub mod manifest;
pub mod metrics;
pub mod scenario;
pub mod simulator;
pub mod table;
pub mod trace;

pub use abr::{Decision, Observation, PolicyId, PolicyParams, PolicyState, Reason};
pub use manifest::{load_manifest, synthesize_manifest, BitrateLadder, SaturationProfile, VideoManifest};
pub use metrics::{aggregate, session_metrics, AggregateReport, SessionReport};
pub use simulator::{replay_check, run_session, SessionConfig, SessionEventLog, SessionOutcome};
pub use trace::{load_trace, BandwidthTrace};
