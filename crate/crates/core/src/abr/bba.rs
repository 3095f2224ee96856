//! Buffer-based rate map: lowest level up to the reservoir, highest level
//! from the cushion on, linear in between.

use serde::{Deserialize, Serialize};

use super::{Decision, Observation, Reason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BbaParams {
    /// Reservoir as a fraction of the buffer capacity.
    pub reservoir_fraction: f64,
    /// Upper edge of the cushion as a fraction of the buffer capacity.
    pub cushion_fraction: f64,
}

impl Default for BbaParams {
    fn default() -> Self {
        Self {
            reservoir_fraction: 0.1,
            cushion_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbaState {
    pub reservoir_s: f64,
    pub cushion_s: f64,
}

impl BbaState {
    pub fn new(params: &BbaParams, buffer_capacity_s: f64) -> Self {
        Self {
            reservoir_s: params.reservoir_fraction * buffer_capacity_s,
            cushion_s: params.cushion_fraction * buffer_capacity_s,
        }
    }
}

pub fn bba_decide(obs: &Observation<'_>, state: &BbaState) -> Decision {
    if obs.prev_level.is_none() {
        return Decision::startup();
    }
    let ladder = obs.manifest.ladder();
    if obs.buffer_s <= state.reservoir_s {
        return Decision::new(0, Reason::Reservoir);
    }
    if obs.buffer_s >= state.cushion_s {
        return Decision::new(ladder.top_level(), Reason::Cushion);
    }
    let frac = (obs.buffer_s - state.reservoir_s) / (state.cushion_s - state.reservoir_s);
    let rate = ladder.lowest() + (ladder.highest() - ladder.lowest()) * frac;
    Decision::new(ladder.highest_at_most(rate), Reason::RateMap)
}
