//! Rate-selection policies behind a single observe/decide interface.
//!
//! Every policy fetches chunk 0 at the lowest level. After that each
//! decision is a pure function of the [`Observation`] and the policy's
//! [`PolicyState`], which the simulator feeds with completed downloads.

mod bba;
mod festive;
mod osmf;
mod sba;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::VideoManifest;

pub use bba::{bba_decide, BbaParams, BbaState};
pub use festive::{festive_decide, harmonic_mean, FestiveParams, FestiveState};
pub use osmf::{osmf_decide, OsmfParams, OsmfState};
pub use sba::{sba_decide, SbaParams};

#[derive(Debug, Error)]
pub enum AbrError {
    #[error("unknown policy `{0}` (expected one of sba, bba, festive, osmf)")]
    UnknownPolicy(String),
    #[error("policy state belongs to {state}, not {requested}")]
    StateMismatch {
        requested: PolicyId,
        state: PolicyId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyId {
    Sba,
    Bba,
    Festive,
    Osmf,
}

impl PolicyId {
    pub const ALL: [PolicyId; 4] = [PolicyId::Sba, PolicyId::Bba, PolicyId::Festive, PolicyId::Osmf];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyId::Sba => "sba",
            PolicyId::Bba => "bba",
            PolicyId::Festive => "festive",
            PolicyId::Osmf => "osmf",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            PolicyId::Sba => "SBA",
            PolicyId::Bba => "BBA",
            PolicyId::Festive => "FESTIVE",
            PolicyId::Osmf => "OSMF",
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyId {
    type Err = AbrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sba" => Ok(PolicyId::Sba),
            "bba" => Ok(PolicyId::Bba),
            "festive" => Ok(PolicyId::Festive),
            "osmf" => Ok(PolicyId::Osmf),
            _ => Err(AbrError::UnknownPolicy(s.to_string())),
        }
    }
}

/// Per-policy tuning, as found under `policy_params` in config files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    pub sba: SbaParams,
    pub bba: BbaParams,
    pub festive: FestiveParams,
    pub osmf: OsmfParams,
}

/// What a policy sees when asked for the level of the next chunk.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// Zero-based index of the chunk about to be fetched.
    pub chunk: usize,
    pub buffer_s: f64,
    pub buffer_capacity_s: f64,
    pub critical_s: f64,
    /// Level of chunk `chunk - 1`; `None` for the first chunk.
    pub prev_level: Option<usize>,
    pub ebw_kbps: f64,
    pub alpha: f64,
    pub manifest: &'a VideoManifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Startup,
    /// Buffer at or below the critical threshold.
    CriticalDrop,
    /// The SSIM gain gate opened; the chosen level may be below the
    /// previous one when the bandwidth estimate fell.
    Upgrade,
    Hold,
    Reservoir,
    Cushion,
    RateMap,
    StepUp,
    StepDown,
}

impl Reason {
    pub const ALL: [Reason; 9] = [
        Reason::Startup,
        Reason::CriticalDrop,
        Reason::Upgrade,
        Reason::Hold,
        Reason::Reservoir,
        Reason::Cushion,
        Reason::RateMap,
        Reason::StepUp,
        Reason::StepDown,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub level: usize,
    pub reason: Reason,
}

impl Decision {
    pub fn new(level: usize, reason: Reason) -> Self {
        Self { level, reason }
    }

    pub(crate) fn startup() -> Self {
        Self::new(0, Reason::Startup)
    }
}

/// Persistent per-session policy state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum PolicyState {
    Sba(SbaParams),
    Bba(BbaState),
    Festive(FestiveState),
    Osmf(OsmfState),
}

impl PolicyState {
    pub fn new(id: PolicyId, params: &PolicyParams, buffer_capacity_s: f64) -> Self {
        match id {
            PolicyId::Sba => PolicyState::Sba(params.sba.clone()),
            PolicyId::Bba => PolicyState::Bba(BbaState::new(&params.bba, buffer_capacity_s)),
            PolicyId::Festive => PolicyState::Festive(FestiveState::new(&params.festive)),
            PolicyId::Osmf => PolicyState::Osmf(OsmfState::new(&params.osmf)),
        }
    }

    pub fn id(&self) -> PolicyId {
        match self {
            PolicyState::Sba(_) => PolicyId::Sba,
            PolicyState::Bba(_) => PolicyId::Bba,
            PolicyState::Festive(_) => PolicyId::Festive,
            PolicyState::Osmf(_) => PolicyId::Osmf,
        }
    }

    /// Feeds one completed download into the state.
    pub fn on_download(&mut self, cbw_kbps: f64, duration_s: f64) {
        match self {
            PolicyState::Sba(_) | PolicyState::Bba(_) => {}
            PolicyState::Festive(s) => s.push(cbw_kbps),
            PolicyState::Osmf(s) => s.last_download_s = Some(duration_s),
        }
    }

    pub fn decide(&self, obs: &Observation<'_>) -> Decision {
        match self {
            PolicyState::Sba(p) => sba_decide(obs, p),
            PolicyState::Bba(s) => bba_decide(obs, s),
            PolicyState::Festive(s) => festive_decide(obs, s),
            PolicyState::Osmf(s) => osmf_decide(obs, s),
        }
    }
}

/// Dispatches to the policy named by `policy`, checking it owns `state`.
pub fn decide(
    policy: PolicyId,
    obs: &Observation<'_>,
    state: &PolicyState,
) -> Result<Decision, AbrError> {
    if state.id() != policy {
        return Err(AbrError::StateMismatch {
            requested: policy,
            state: state.id(),
        });
    }
    Ok(state.decide(obs))
}
