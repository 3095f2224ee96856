//! SSIM-based adaptation.
//!
//! Drops to the lowest level whenever the buffer is in the critical zone.
//! Otherwise it proposes the highest rate strictly below the bandwidth
//! estimate and only moves there when the SSIM change against the previous
//! chunk exceeds the running mean variation; else it keeps the previous
//! level.

use serde::{Deserialize, Serialize};

use super::{Decision, Observation, Reason};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbaParams {
    /// Only let the gain gate pick a level above the previous one.
    pub upgrade_only: bool,
}

pub fn sba_decide(obs: &Observation<'_>, params: &SbaParams) -> Decision {
    let Some(prev) = obs.prev_level else {
        return Decision::startup();
    };
    if obs.buffer_s <= obs.critical_s {
        return Decision::new(0, Reason::CriticalDrop);
    }
    let m = obs.manifest;
    // no rate below the estimate: the set is empty, fall back to the floor
    let proposed = m.ladder().highest_below(obs.ebw_kbps).unwrap_or(0);
    let ssim_gain =
        m.ssim_matrix()[obs.chunk][proposed] - m.ssim_matrix()[obs.chunk - 1][prev];
    let allowed = !params.upgrade_only || proposed > prev;
    if ssim_gain > obs.alpha && allowed {
        Decision::new(proposed, Reason::Upgrade)
    } else {
        Decision::new(prev, Reason::Hold)
    }
}
