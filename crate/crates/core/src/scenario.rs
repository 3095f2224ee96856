//! Seeded synthetic inputs: an oscillating bandwidth trace family and the
//! bundled evaluation scenario built on the Netflix ladder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::manifest::{synthesize_manifest, BitrateLadder, SaturationProfile, VideoManifest};
use crate::trace::{BandwidthTrace, Sample};

/// Alternating good/poor network phases with per-sample jitter. The
/// defaults resemble a mobile link: long good spells above the top rung
/// broken by shorter fades into the lower half of the ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillationProfile {
    pub duration_s: f64,
    pub sample_interval_s: f64,
    /// Range of the mean rate of a poor phase.
    pub low_kbps: (f64, f64),
    /// Range of the mean rate of a good phase.
    pub high_kbps: (f64, f64),
    /// Range of good phase lengths.
    pub high_phase_s: (f64, f64),
    /// Range of poor phase lengths.
    pub low_phase_s: (f64, f64),
    /// Log-normal sigma applied to every sample around its phase mean.
    pub jitter: f64,
}

impl Default for OscillationProfile {
    fn default() -> Self {
        Self {
            duration_s: 900.0,
            sample_interval_s: 1.0,
            low_kbps: (1000.0, 3000.0),
            high_kbps: (6000.0, 15000.0),
            high_phase_s: (30.0, 120.0),
            low_phase_s: (10.0, 40.0),
            jitter: 0.3,
        }
    }
}

/// Reads an OscillationProfile from TOML; absent keys keep their defaults.
pub fn parse_profile(text: &str) -> Result<OscillationProfile, toml::de::Error> {
    toml::from_str(text)
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// One looping trace; identical seeds give identical traces.
pub fn oscillating_trace(profile: &OscillationProfile, seed: u64) -> BandwidthTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = LogNormal::new(0.0, profile.jitter.max(0.0)).expect("finite sigma");
    let step = profile.sample_interval_s.max(1e-3);
    let mut samples = Vec::new();
    let mut good = rng.random_bool(0.5);
    let mut t = 0.0;
    while t < profile.duration_s {
        let span = if good { profile.high_phase_s } else { profile.low_phase_s };
        let phase_end = t + uniform(&mut rng, span).max(step);
        let level = uniform(&mut rng, if good { profile.high_kbps } else { profile.low_kbps });
        while t < phase_end && t < profile.duration_s {
            let kbps: f64 = level * noise.sample(&mut rng);
            // whole kbps, millisecond timestamps: keeps the CSV form exact
            samples.push(Sample {
                time_s: (t * 1000.0).round() / 1000.0,
                kbps: kbps.round().max(1.0),
            });
            t += step;
        }
        good = !good;
    }
    BandwidthTrace::new(samples, true).expect("generated trace is valid")
}

pub fn oscillating_traces(profile: &OscillationProfile, seed: u64, count: usize) -> Vec<BandwidthTrace> {
    (0..count)
        .map(|i| oscillating_trace(profile, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)))
        .collect()
}

/// The bundled evaluation scenario.
pub struct SyntheticScenario {
    pub manifest: VideoManifest,
    pub traces: Vec<BandwidthTrace>,
    /// `(buffer capacity, critical threshold)` pairs in seconds.
    pub scenarios: Vec<(f64, f64)>,
}

pub const SCENARIO_SEED: u64 = 2019;
pub const SCENARIO_CHUNKS: usize = 150;
pub const SCENARIO_TRACES: usize = 24;
/// Most rows keep gaining SSIM up to about this rate.
pub const SCENARIO_KNEE_KBPS: f64 = 3000.0;

pub fn scenario_manifest() -> VideoManifest {
    synthesize_manifest(
        BitrateLadder::netflix(),
        SCENARIO_CHUNKS,
        4.0,
        &SaturationProfile {
            jitter_seed: SCENARIO_SEED,
            knee_kbps: SCENARIO_KNEE_KBPS,
            ..SaturationProfile::default()
        },
    )
    .expect("scenario profile is valid")
}

pub fn synthetic_scenario() -> SyntheticScenario {
    SyntheticScenario {
        manifest: scenario_manifest(),
        traces: oscillating_traces(&OscillationProfile::default(), SCENARIO_SEED, SCENARIO_TRACES),
        scenarios: vec![(120.0, 12.0), (240.0, 12.0)],
    }
}
