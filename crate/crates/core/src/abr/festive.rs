//! Simplified FESTIVE: the target level is the highest one at or below the
//! harmonic mean of the last few consumed bandwidths, and the level moves
//! at most one step per decision towards it. The buffer is not consulted.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Decision, Observation, Reason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FestiveParams {
    /// Number of recent downloads in the harmonic mean.
    pub window: usize,
}

impl Default for FestiveParams {
    fn default() -> Self {
        Self { window: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FestiveState {
    pub window: usize,
    pub recent_kbps: VecDeque<f64>,
}

impl FestiveState {
    pub fn new(params: &FestiveParams) -> Self {
        Self {
            window: params.window.max(1),
            recent_kbps: VecDeque::new(),
        }
    }

    pub fn push(&mut self, cbw_kbps: f64) {
        if self.recent_kbps.len() == self.window {
            self.recent_kbps.pop_front();
        }
        self.recent_kbps.push_back(cbw_kbps);
    }
}

pub fn harmonic_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (n, inv) = values
        .into_iter()
        .fold((0usize, 0.0f64), |(n, s), v| (n + 1, s + 1.0 / v));
    (n > 0).then(|| n as f64 / inv)
}

pub fn festive_decide(obs: &Observation<'_>, state: &FestiveState) -> Decision {
    let Some(prev) = obs.prev_level else {
        return Decision::startup();
    };
    let Some(estimate) = harmonic_mean(state.recent_kbps.iter().copied()) else {
        return Decision::startup();
    };
    let target = obs.manifest.ladder().highest_at_most(estimate);
    match target.cmp(&prev) {
        std::cmp::Ordering::Greater => Decision::new(prev + 1, Reason::StepUp),
        std::cmp::Ordering::Less => Decision::new(prev - 1, Reason::StepDown),
        std::cmp::Ordering::Equal => Decision::new(prev, Reason::Hold),
    }
}
