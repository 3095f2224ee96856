//! OSMF-style download-duration rule.
//!
//! With `ratio = chunk_duration / last_download_duration`: above the up
//! threshold step one level up, below the down threshold re-select the
//! highest level sustainable at `prev_rate * ratio`, otherwise hold.

use serde::{Deserialize, Serialize};

use super::{Decision, Observation, Reason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OsmfParams {
    pub switch_up_ratio: f64,
    pub switch_down_ratio: f64,
}

impl Default for OsmfParams {
    fn default() -> Self {
        Self {
            switch_up_ratio: 1.9,
            switch_down_ratio: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsmfState {
    pub switch_up_ratio: f64,
    pub switch_down_ratio: f64,
    pub last_download_s: Option<f64>,
}

impl OsmfState {
    pub fn new(params: &OsmfParams) -> Self {
        Self {
            switch_up_ratio: params.switch_up_ratio,
            switch_down_ratio: params.switch_down_ratio,
            last_download_s: None,
        }
    }
}

pub fn osmf_decide(obs: &Observation<'_>, state: &OsmfState) -> Decision {
    let (Some(prev), Some(last)) = (obs.prev_level, state.last_download_s) else {
        return Decision::startup();
    };
    let ladder = obs.manifest.ladder();
    let ratio = obs.manifest.chunk_duration() / last;
    if ratio > state.switch_up_ratio {
        Decision::new((prev + 1).min(ladder.top_level()), Reason::StepUp)
    } else if ratio < state.switch_down_ratio {
        let sustainable = ladder.rates()[prev] * ratio;
        Decision::new(ladder.highest_at_most(sustainable), Reason::StepDown)
    } else {
        Decision::new(prev, Reason::Hold)
    }
}
