//! Video model: bitrate ladder, chunk grid and the per-chunk SSIM matrix.
//!
//! A manifest is stored as a single JSON document:
//!
//! ```json
//! {
//!   "chunk_duration_s": 4.0,
//!   "ladder_kbps": [235, 375, 560],
//!   "ssim": [[0.91, 0.94, 0.95], [0.88, 0.93, 0.96]],
//!   "chunk_kilobits": [[940, 1500, 2240], [950, 1490, 2250]]
//! }
//! ```
//!
//! `ssim` has one row per chunk and one column per ladder level. The chunk
//! count is the number of rows. `chunk_kilobits` is optional and, when
//! present, gives the exact download volume of every chunk/level pair.
//!
//! Chunk and level indices are zero-based throughout the crate: level 0 is
//! the lowest bitrate of the ladder.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid manifest field {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("index out of range: chunk {chunk}, level {level} (manifest has {chunks} chunks, {levels} levels)")]
    OutOfRange {
        chunk: usize,
        level: usize,
        chunks: usize,
        levels: usize,
    },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ManifestError {
    ManifestError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Strictly increasing list of encoding rates in kbps, at least two levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BitrateLadder {
    levels: Vec<f64>,
}

impl BitrateLadder {
    pub fn new(levels: Vec<f64>) -> Result<Self, ManifestError> {
        if levels.len() < 2 {
            return Err(invalid(
                "ladder_kbps",
                format!("need at least 2 levels, got {}", levels.len()),
            ));
        }
        for (j, &rate) in levels.iter().enumerate() {
            if !rate.is_finite() || rate <= 0.0 {
                return Err(invalid(
                    format!("levels[{j}]"),
                    format!("bitrate must be positive, got {rate}"),
                ));
            }
            if j > 0 && rate <= levels[j - 1] {
                return Err(invalid(
                    format!("levels[{j}]"),
                    format!(
                        "ladder must be strictly increasing ({} then {rate})",
                        levels[j - 1]
                    ),
                ));
            }
        }
        Ok(Self { levels })
    }

    /// The ten-level ladder used by Netflix-style encodings.
    pub fn netflix() -> Self {
        Self {
            levels: vec![
                235.0, 375.0, 560.0, 750.0, 1050.0, 1750.0, 2350.0, 3000.0, 4300.0, 5800.0,
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.levels
    }

    pub fn rate(&self, level: usize) -> Option<f64> {
        self.levels.get(level).copied()
    }

    pub fn lowest(&self) -> f64 {
        self.levels[0]
    }

    pub fn highest(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    /// Highest level whose rate is `<= rate`, or level 0 if none is.
    pub fn highest_at_most(&self, rate: f64) -> usize {
        self.levels
            .iter()
            .rposition(|&r| r <= rate)
            .unwrap_or(0)
    }

    /// Highest level whose rate is strictly below `rate`, if any.
    pub fn highest_below(&self, rate: f64) -> Option<usize> {
        self.levels.iter().rposition(|&r| r < rate)
    }
}

impl TryFrom<Vec<f64>> for BitrateLadder {
    type Error = ManifestError;

    fn try_from(levels: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(levels)
    }
}

impl From<BitrateLadder> for Vec<f64> {
    fn from(ladder: BitrateLadder) -> Self {
        ladder.levels
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    chunk_duration_s: f64,
    ladder_kbps: Vec<f64>,
    ssim: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chunk_kilobits: Option<Vec<Vec<f64>>>,
}

/// Immutable description of a VOD title with its SSIM matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ManifestFile", into = "ManifestFile")]
pub struct VideoManifest {
    chunk_duration: f64,
    ladder: BitrateLadder,
    ssim: Vec<Vec<f64>>,
    chunk_kilobits: Option<Vec<Vec<f64>>>,
}

impl TryFrom<ManifestFile> for VideoManifest {
    type Error = ManifestError;

    fn try_from(file: ManifestFile) -> Result<Self, Self::Error> {
        let ladder = BitrateLadder::new(file.ladder_kbps)?;
        VideoManifest::new(file.chunk_duration_s, ladder, file.ssim, file.chunk_kilobits)
    }
}

impl From<VideoManifest> for ManifestFile {
    fn from(m: VideoManifest) -> Self {
        ManifestFile {
            chunk_duration_s: m.chunk_duration,
            ladder_kbps: m.ladder.into(),
            ssim: m.ssim,
            chunk_kilobits: m.chunk_kilobits,
        }
    }
}

impl VideoManifest {
    pub fn new(
        chunk_duration: f64,
        ladder: BitrateLadder,
        ssim: Vec<Vec<f64>>,
        chunk_kilobits: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, ManifestError> {
        if !chunk_duration.is_finite() || chunk_duration <= 0.0 {
            return Err(invalid(
                "chunk_duration_s",
                format!("must be positive, got {chunk_duration}"),
            ));
        }
        if ssim.is_empty() {
            return Err(invalid("ssim", "need at least one chunk row"));
        }
        let levels = ladder.len();
        for (i, row) in ssim.iter().enumerate() {
            if row.len() != levels {
                return Err(invalid(
                    format!("ssim[{i}]"),
                    format!("expected {levels} values, got {}", row.len()),
                ));
            }
            for (j, &q) in row.iter().enumerate() {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(invalid(
                        format!("ssim[{i}][{j}]"),
                        format!("SSIM must lie in (0, 1], got {q}"),
                    ));
                }
            }
        }
        if let Some(volumes) = &chunk_kilobits {
            if volumes.len() != ssim.len() {
                return Err(invalid(
                    "chunk_kilobits",
                    format!("expected {} rows, got {}", ssim.len(), volumes.len()),
                ));
            }
            for (i, row) in volumes.iter().enumerate() {
                if row.len() != levels {
                    return Err(invalid(
                        format!("chunk_kilobits[{i}]"),
                        format!("expected {levels} values, got {}", row.len()),
                    ));
                }
                for (j, &v) in row.iter().enumerate() {
                    if !v.is_finite() || v <= 0.0 {
                        return Err(invalid(
                            format!("chunk_kilobits[{i}][{j}]"),
                            format!("volume must be positive, got {v}"),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            chunk_duration,
            ladder,
            ssim,
            chunk_kilobits,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization is infallible")
    }

    pub fn chunk_count(&self) -> usize {
        self.ssim.len()
    }

    pub fn chunk_duration(&self) -> f64 {
        self.chunk_duration
    }

    pub fn ladder(&self) -> &BitrateLadder {
        &self.ladder
    }

    pub fn level_count(&self) -> usize {
        self.ladder.len()
    }

    pub fn ssim_matrix(&self) -> &[Vec<f64>] {
        &self.ssim
    }

    pub fn has_exact_volumes(&self) -> bool {
        self.chunk_kilobits.is_some()
    }

    fn check(&self, chunk: usize, level: usize) -> Result<(), ManifestError> {
        if chunk >= self.chunk_count() || level >= self.level_count() {
            return Err(ManifestError::OutOfRange {
                chunk,
                level,
                chunks: self.chunk_count(),
                levels: self.level_count(),
            });
        }
        Ok(())
    }

    pub fn ssim(&self, chunk: usize, level: usize) -> Result<f64, ManifestError> {
        self.check(chunk, level)?;
        Ok(self.ssim[chunk][level])
    }

    /// Download volume of a chunk in kilobits.
    ///
    /// Without exact volumes this is the nominal `rate_kbps * duration_s`,
    /// so a volume divided by a rate in kbps gives seconds.
    pub fn chunk_volume(&self, chunk: usize, level: usize) -> Result<f64, ManifestError> {
        self.check(chunk, level)?;
        Ok(match &self.chunk_kilobits {
            Some(volumes) => volumes[chunk][level],
            None => self.ladder.levels[level] * self.chunk_duration,
        })
    }

    /// Returns a copy with `offset` added to every SSIM entry, skipping validation.
    #[doc(hidden)]
    pub fn with_ssim_offset(&self, offset: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.ssim {
            for q in row {
                *q += offset;
            }
        }
        out
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<VideoManifest, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    VideoManifest::from_json(&text)
}

/// Shape of a synthetic SSIM-vs-bitrate curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationProfile {
    /// SSIM of a chunk of nominal difficulty at the lowest level.
    pub q_floor: f64,
    /// Asymptotic SSIM reached at high bitrates.
    pub q_ceiling: f64,
    /// Bitrate (kbps) by which a nominal chunk has gained ~95% of its range.
    pub knee_kbps: f64,
    pub jitter_seed: u64,
    /// Log-scale spread of per-chunk difficulty; 0 makes every row identical.
    pub per_chunk_spread: f64,
}

impl Default for SaturationProfile {
    fn default() -> Self {
        Self {
            q_floor: 0.80,
            q_ceiling: 0.99,
            knee_kbps: 1750.0,
            jitter_seed: 1,
            per_chunk_spread: 0.6,
        }
    }
}

impl SaturationProfile {
    pub fn validate(&self, ladder: &BitrateLadder) -> Result<(), ManifestError> {
        if !(self.q_floor > 0.0 && self.q_floor <= self.q_ceiling && self.q_ceiling <= 1.0) {
            return Err(invalid(
                "profile",
                format!(
                    "need 0 < q_floor <= q_ceiling <= 1, got {} / {}",
                    self.q_floor, self.q_ceiling
                ),
            ));
        }
        if !(self.knee_kbps > ladder.lowest() && self.knee_kbps <= ladder.highest()) {
            return Err(invalid(
                "profile.knee_kbps",
                format!(
                    "knee {} outside ladder span ({}, {}]",
                    self.knee_kbps,
                    ladder.lowest(),
                    ladder.highest()
                ),
            ));
        }
        if !self.per_chunk_spread.is_finite() || self.per_chunk_spread < 0.0 {
            return Err(invalid("profile.per_chunk_spread", "must be >= 0"));
        }
        Ok(())
    }
}

/// Builds a manifest whose SSIM saturates with bitrate.
///
/// Each chunk draws a difficulty `d = exp(spread * z)`, `z ~ N(0, 1)`.
/// Easy chunks (`d < 1`) start closer to the ceiling and saturate sooner;
/// hard chunks keep gaining quality further up the ladder. Rows are
/// non-decreasing in level and stay within `[q_floor, q_ceiling]`.
pub fn synthesize_manifest(
    ladder: BitrateLadder,
    chunk_count: usize,
    chunk_duration: f64,
    profile: &SaturationProfile,
) -> Result<VideoManifest, ManifestError> {
    profile.validate(&ladder)?;
    if chunk_count == 0 {
        return Err(invalid("chunk_count", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.jitter_seed);
    let r1 = ladder.lowest();
    let base_scale = (profile.knee_kbps - r1) / 3.0;
    let range = profile.q_ceiling - profile.q_floor;
    let unit = 1.0 - (-1.0f64).exp();

    let ssim = (0..chunk_count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let difficulty = (profile.per_chunk_spread * z).exp();
            let lift = ((1.0 - (-difficulty).exp()) / unit).min(1.0);
            let row_floor = profile.q_ceiling - range * lift;
            let scale = base_scale * difficulty;
            ladder
                .rates()
                .iter()
                .map(|&r| {
                    let gain = 1.0 - (-(r - r1) / scale).exp();
                    (row_floor + (profile.q_ceiling - row_floor) * gain)
                        .clamp(profile.q_floor, profile.q_ceiling)
                })
                .collect()
        })
        .collect();

    VideoManifest::new(chunk_duration, ladder, ssim, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_profile() -> SaturationProfile {
        SaturationProfile {
            per_chunk_spread: 0.0,
            ..SaturationProfile::default()
        }
    }

    #[test]
    fn netflix_manifest_shape() {
        let m = synthesize_manifest(BitrateLadder::netflix(), 150, 4.0, &SaturationProfile::default())
            .unwrap();
        let text = m.to_json();
        let loaded = VideoManifest::from_json(&text).unwrap();
        assert_eq!(loaded.level_count(), 10);
        assert_eq!(loaded.chunk_count(), 150);
        assert_eq!(loaded.chunk_duration(), 4.0);
        assert_eq!(loaded, m);
    }

    #[test]
    fn ladder_order_violation_names_index() {
        let err = VideoManifest::from_json(
            r#"{"chunk_duration_s":4,"ladder_kbps":[375,235],"ssim":[[0.9,0.95]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("levels[1]"), "{err}");
    }

    #[test]
    fn ssim_range_violation_names_index() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..4)
                    .map(|j| if i == 3 && j == 2 { 1.2 } else { 0.9 })
                    .collect()
            })
            .collect();
        let text = serde_json::json!({
            "chunk_duration_s": 4,
            "ladder_kbps": [235, 375, 560, 750],
            "ssim": rows,
        })
        .to_string();
        let err = VideoManifest::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("ssim[3][2]"), "{err}");
    }

    #[test]
    fn wrong_row_width_rejected() {
        let err = VideoManifest::from_json(
            r#"{"chunk_duration_s":4,"ladder_kbps":[235,375],"ssim":[[0.9,0.95],[0.9]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("ssim[1]"), "{err}");
    }

    #[test]
    fn zero_ssim_and_bad_duration_rejected() {
        assert!(VideoManifest::from_json(
            r#"{"chunk_duration_s":4,"ladder_kbps":[235,375],"ssim":[[0.0,0.95]]}"#
        )
        .is_err());
        assert!(VideoManifest::from_json(
            r#"{"chunk_duration_s":0,"ladder_kbps":[235,375],"ssim":[[0.5,0.95]]}"#
        )
        .is_err());
        assert!(VideoManifest::from_json(r#"{"chunk_duration_s":4,"ladder_kbps":[235],"ssim":[[0.5]]}"#).is_err());
    }

    #[test]
    fn nonpositive_volume_rejected() {
        let err = VideoManifest::from_json(
            r#"{"chunk_duration_s":4,"ladder_kbps":[235,375],"ssim":[[0.9,0.95]],"chunk_kilobits":[[940,-1]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("chunk_kilobits[0][1]"), "{err}");
    }

    #[test]
    fn nominal_volume_is_rate_times_duration() {
        let m = synthesize_manifest(BitrateLadder::netflix(), 3, 4.0, &flat_profile()).unwrap();
        assert_eq!(m.chunk_volume(0, 0).unwrap(), 940.0);
        assert!(m.chunk_volume(3, 0).is_err());
        assert!(m.chunk_volume(0, 10).is_err());
    }

    #[test]
    fn exact_volume_passthrough() {
        let m = VideoManifest::from_json(
            r#"{"chunk_duration_s":4,"ladder_kbps":[235,375],"ssim":[[0.9,0.95]],"chunk_kilobits":[[1000,1500]]}"#,
        )
        .unwrap();
        assert_eq!(m.chunk_volume(0, 0).unwrap(), 1000.0);
        assert!(m.has_exact_volumes());
    }

    #[test]
    fn no_spread_gives_identical_rows() {
        let m = synthesize_manifest(BitrateLadder::netflix(), 20, 4.0, &flat_profile()).unwrap();
        let first = &m.ssim_matrix()[0];
        assert!(m.ssim_matrix().iter().all(|row| row == first));
    }

    #[test]
    fn early_knee_saturates_top_of_ladder() {
        let ladder = BitrateLadder::netflix();
        let profile = SaturationProfile {
            knee_kbps: 375.0,
            per_chunk_spread: 0.3,
            ..SaturationProfile::default()
        };
        let m = synthesize_manifest(ladder, 40, 4.0, &profile).unwrap();
        for row in m.ssim_matrix() {
            let low_gain = row[1] - row[0];
            let top_gain = row[9] - row[8];
            assert!(low_gain > 0.02, "row {row:?}");
            assert!(top_gain < 1e-6, "row {row:?}");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = SaturationProfile::default();
        let a = synthesize_manifest(BitrateLadder::netflix(), 50, 4.0, &p).unwrap();
        let b = synthesize_manifest(BitrateLadder::netflix(), 50, 4.0, &p).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = synthesize_manifest(
            BitrateLadder::netflix(),
            50,
            4.0,
            &SaturationProfile {
                jitter_seed: 2,
                ..p
            },
        )
        .unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn profile_knee_must_be_inside_ladder() {
        let p = SaturationProfile {
            knee_kbps: 9000.0,
            ..SaturationProfile::default()
        };
        assert!(synthesize_manifest(BitrateLadder::netflix(), 5, 4.0, &p).is_err());
    }

    #[test]
    fn ladder_lookups() {
        let l = BitrateLadder::netflix();
        assert_eq!(l.highest_below(2500.0), Some(6));
        assert_eq!(l.highest_below(235.0), None);
        assert_eq!(l.highest_at_most(3017.5), 7);
        assert_eq!(l.highest_at_most(100.0), 0);
    }
}
