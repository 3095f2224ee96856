//! Running statistics consumed by the SSIM-aware policy.
//!
//! * consumed bandwidth of each download, `volume / (finish - send)`;
//! * estimated bandwidth for the next fetch, the plain mean of every
//!   consumed bandwidth so far (the lowest ladder rate before any download);
//! * mean SSIM variation between consecutively displayed chunks.
//!
//! The variation mean is evaluated at decision time: when choosing chunk
//! `l` only the transitions up to chunk `l - 1` are known, so the mean runs
//! over those. With no transition recorded it is 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{ManifestError, VideoManifest};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("download duration must be positive (send {send_time}s, finish {finish_time}s)")]
    NonPositiveDuration { send_time: f64, finish_time: f64 },
    #[error("download volume must be positive, got {0}")]
    NonPositiveVolume(f64),
    #[error("chunk {0} has no predecessor")]
    FirstChunk(usize),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThroughputHistory {
    cbw_kbps: Vec<f64>,
}

impl ThroughputHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends and returns the consumed bandwidth of one download.
    pub fn record_download(
        &mut self,
        send_time: f64,
        finish_time: f64,
        volume_kilobits: f64,
    ) -> Result<f64, EstimatorError> {
        let duration = finish_time - send_time;
        if !(duration > 0.0) {
            return Err(EstimatorError::NonPositiveDuration {
                send_time,
                finish_time,
            });
        }
        if !(volume_kilobits > 0.0) {
            return Err(EstimatorError::NonPositiveVolume(volume_kilobits));
        }
        let cbw = volume_kilobits / duration;
        self.cbw_kbps.push(cbw);
        Ok(cbw)
    }

    pub fn values(&self) -> &[f64] {
        &self.cbw_kbps
    }

    pub fn len(&self) -> usize {
        self.cbw_kbps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cbw_kbps.is_empty()
    }

    /// Estimated bandwidth for fetching `chunk` (zero-based): the mean of the
    /// consumed bandwidths of chunks `0..chunk`, or `lowest_kbps` for chunk 0.
    pub fn ebw(&self, chunk: usize, lowest_kbps: f64) -> f64 {
        let n = chunk.min(self.cbw_kbps.len());
        if n == 0 {
            return lowest_kbps;
        }
        self.cbw_kbps[..n].iter().sum::<f64>() / n as f64
    }

    /// Estimate for the next fetch given everything recorded so far.
    pub fn current_ebw(&self, lowest_kbps: f64) -> f64 {
        self.ebw(self.cbw_kbps.len(), lowest_kbps)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SsimVariationHistory {
    deltas: Vec<f64>,
    levels: Vec<usize>,
}

impl SsimVariationHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the level chosen for the next chunk in sequence and, from
    /// the second chunk on, the SSIM change relative to its predecessor.
    pub fn push_level(
        &mut self,
        manifest: &VideoManifest,
        level: usize,
    ) -> Result<Option<f64>, EstimatorError> {
        let chunk = self.levels.len();
        let delta = match self.levels.last() {
            Some(&prev) => {
                let d = manifest.ssim(chunk, level)? - manifest.ssim(chunk - 1, prev)?;
                self.deltas.push(d);
                Some(d)
            }
            None => {
                manifest.ssim(chunk, level)?;
                None
            }
        };
        self.levels.push(level);
        Ok(delta)
    }

    /// Appends `Q(chunk, level) - Q(chunk - 1, prev_level)` without
    /// tracking levels; `chunk` must be at least 1.
    pub fn record_display_transition(
        &mut self,
        manifest: &VideoManifest,
        chunk: usize,
        prev_level: usize,
        level: usize,
    ) -> Result<f64, EstimatorError> {
        if chunk == 0 {
            return Err(EstimatorError::FirstChunk(chunk));
        }
        let d = manifest.ssim(chunk, level)? - manifest.ssim(chunk - 1, prev_level)?;
        self.deltas.push(d);
        Ok(d)
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Mean of all recorded deltas, 0 when none.
    pub fn alpha(&self) -> f64 {
        if self.deltas.is_empty() {
            return 0.0;
        }
        self.deltas.iter().sum::<f64>() / self.deltas.len() as f64
    }

    /// Mean of the deltas known when deciding `chunk` (zero-based): the
    /// transitions into chunks `1..chunk`.
    pub fn alpha_at(&self, chunk: usize) -> f64 {
        let n = chunk.saturating_sub(1).min(self.deltas.len());
        if n == 0 {
            return 0.0;
        }
        self.deltas[..n].iter().sum::<f64>() / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::BitrateLadder;

    fn manifest(rows: Vec<Vec<f64>>) -> VideoManifest {
        VideoManifest::new(4.0, BitrateLadder::new(vec![235.0, 375.0]).unwrap(), rows, None)
            .unwrap()
    }

    #[test]
    fn cbw_is_volume_over_duration() {
        let mut h = ThroughputHistory::new();
        assert_eq!(h.record_download(10.0, 12.0, 4000.0).unwrap(), 2000.0);
        assert_eq!(h.record_download(12.0, 16.0, 940.0).unwrap(), 235.0);
        assert_eq!(h.values(), &[2000.0, 235.0]);
    }

    #[test]
    fn zero_duration_rejected() {
        let mut h = ThroughputHistory::new();
        assert!(h.record_download(3.0, 3.0, 100.0).is_err());
        assert!(h.record_download(3.0, 4.0, 0.0).is_err());
        assert!(h.is_empty());
    }

    #[test]
    fn ebw_mean_and_startup() {
        let mut h = ThroughputHistory::new();
        assert_eq!(h.ebw(0, 235.0), 235.0);
        h.record_download(0.0, 1.0, 1000.0).unwrap();
        assert_eq!(h.ebw(1, 235.0), 1000.0);
        h.record_download(1.0, 2.0, 3000.0).unwrap();
        // chunk 2 sees chunks 0 and 1: mean of 1000 and 3000
        assert_eq!(h.ebw(2, 235.0), 2000.0);
        assert_eq!(h.current_ebw(235.0), 2000.0);

        let mut h = ThroughputHistory::new();
        h.record_download(0.0, 1.0, 2000.0).unwrap();
        h.record_download(1.0, 2.0, 3000.0).unwrap();
        assert_eq!(h.ebw(2, 235.0), 2500.0);
    }

    #[test]
    fn transitions_signed() {
        let m = manifest(vec![vec![0.95, 0.97], vec![0.96, 0.90]]);
        let mut v = SsimVariationHistory::new();
        let d = v.record_display_transition(&m, 1, 0, 0).unwrap();
        assert!((d - 0.01).abs() < 1e-12);
        let d = v.record_display_transition(&m, 1, 1, 1).unwrap();
        assert!((d + 0.07).abs() < 1e-12);
        assert!(v.record_display_transition(&m, 0, 0, 0).is_err());
        assert!(v.record_display_transition(&m, 2, 0, 0).is_err());
    }

    #[test]
    fn flat_manifest_zero_delta() {
        let m = manifest(vec![vec![0.9, 0.95]; 3]);
        let mut v = SsimVariationHistory::new();
        assert_eq!(v.push_level(&m, 1).unwrap(), None);
        assert_eq!(v.push_level(&m, 1).unwrap(), Some(0.0));
    }

    #[test]
    fn alpha_means() {
        let mut v = SsimVariationHistory::new();
        assert_eq!(v.alpha(), 0.0);
        assert_eq!(v.alpha_at(2), 0.0);
        v.deltas.push(0.02);
        assert_eq!(v.alpha(), 0.02);
        v.deltas.push(-0.005);
        assert!((v.alpha() - 0.0075).abs() < 1e-15);
        v.deltas = vec![0.01, -0.005];
        assert!((v.alpha() - 0.0025).abs() < 1e-15);
        // deciding chunk 2 only knows the transition into chunk 1
        assert_eq!(v.alpha_at(2), 0.01);
        assert_eq!(v.alpha_at(1), 0.0);
    }
}
