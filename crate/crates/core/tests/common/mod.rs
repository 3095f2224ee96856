//! Random inputs and independent reference computations shared by the
//! integration tests. Nothing here calls into the estimator, policy or
//! trace-integration code it is used to check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sba_core::simulator::Event;
use sba_core::trace::Sample;
use sba_core::{BandwidthTrace, BitrateLadder, PolicyId, Reason, SessionConfig, VideoManifest};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_ladder(rng: &mut impl Rng, levels: usize) -> Vec<f64> {
    let mut rate = rng.random_range(100.0..400.0_f64).round();
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        out.push(rate);
        rate = (rate * rng.random_range(1.15..2.0)).round();
    }
    out
}

/// Arbitrary SSIM rows, not necessarily monotone in level.
pub fn random_rows(rng: &mut impl Rng, chunks: usize, levels: usize) -> Vec<Vec<f64>> {
    (0..chunks)
        .map(|_| (0..levels).map(|_| rng.random_range(0.5..1.0)).collect())
        .collect()
}

pub fn random_manifest(rng: &mut impl Rng) -> VideoManifest {
    let levels = rng.random_range(2..=8);
    let chunks = rng.random_range(3..=40);
    let duration = [1.0, 2.0, 4.0, 6.0][rng.random_range(0..4)];
    let ladder = random_ladder(rng, levels);
    let rows = random_rows(rng, chunks, levels);
    let volumes = rng.random_bool(0.3).then(|| {
        (0..chunks)
            .map(|_| {
                ladder
                    .iter()
                    .map(|r| (r * duration * rng.random_range(0.7..1.3)).round())
                    .collect()
            })
            .collect()
    });
    VideoManifest::new(duration, BitrateLadder::new(ladder).unwrap(), rows, volumes).unwrap()
}

/// Millisecond-aligned piecewise trace. With `starving`, a non-looping
/// trace may end on a 0 kbps sample.
pub fn random_trace(rng: &mut impl Rng, looped: bool, starving: bool) -> BandwidthTrace {
    let n = rng.random_range(1..=30);
    let mut samples = Vec::with_capacity(n);
    let mut t_ms: u64 = 0;
    for i in 0..n {
        let kbps = if rng.random_bool(0.08) {
            0.0
        } else {
            rng.random_range(50.0..9000.0_f64).round()
        };
        samples.push(Sample {
            time_s: t_ms as f64 / 1000.0,
            kbps: if i == 0 && looped { kbps.max(100.0) } else { kbps },
        });
        t_ms += rng.random_range(500..20_000);
    }
    let last = samples.last_mut().unwrap();
    if !looped {
        last.kbps = if starving && rng.random_bool(0.5) {
            0.0
        } else {
            last.kbps.max(100.0)
        };
    }
    BandwidthTrace::new(samples, looped).unwrap()
}

pub fn random_config(rng: &mut impl Rng, manifest: &VideoManifest, looped: bool) -> SessionConfig {
    let t = manifest.chunk_duration();
    let bs = rng.random_range(2.0 * t..200.0_f64.max(3.0 * t));
    let lc = rng.random_range(0.5..(bs - 0.1).min(30.0));
    let max_chunks = ((bs / t).floor() as usize).clamp(1, 3);
    SessionConfig {
        buffer_capacity_s: bs,
        critical_threshold_s: lc,
        startup_chunks: rng.random_range(1..=max_chunks),
        resume_chunks: rng.random_range(1..=max_chunks),
        loop_trace: looped,
        policy: PolicyId::ALL[rng.random_range(0..4)],
        ..SessionConfig::default()
    }
}

/// A random but valid (manifest, trace, config) triple.
pub fn random_session(seed: u64) -> (VideoManifest, BandwidthTrace, SessionConfig) {
    let mut r = rng(seed);
    let manifest = random_manifest(&mut r);
    let looped = r.random_bool(0.6);
    let trace = random_trace(&mut r, looped, true);
    let config = random_config(&mut r, &manifest, looped);
    (manifest, trace, config)
}

pub fn rel_close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()).max(1.0)
}

/// Volumes read straight from the manifest's file form.
pub struct VolumeOracle(serde_json::Value);

impl VolumeOracle {
    pub fn new(m: &VideoManifest) -> Self {
        Self(serde_json::from_str(&m.to_json()).unwrap())
    }

    pub fn volume(&self, chunk: usize, level: usize) -> f64 {
        let json = &self.0;
        match json.get("chunk_kilobits").filter(|v| !v.is_null()) {
            Some(v) => v[chunk][level].as_f64().unwrap(),
            None => json["ladder_kbps"][level].as_f64().unwrap() * json["chunk_duration_s"].as_f64().unwrap(),
        }
    }
}

/// Brute-force CBW / EBW / α over a logged session. Returns one message
/// per disagreement with what the log recorded.
pub fn estimator_oracle(events: &[Event], m: &VideoManifest, rtol: f64) -> Vec<String> {
    let q = m.ssim_matrix();
    let r1 = m.ladder().rates()[0];
    let mut cbw: Vec<f64> = Vec::new();
    let mut levels: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    let volumes = VolumeOracle::new(m);
    for (i, e) in events.iter().enumerate() {
        match *e {
            Event::FetchIssued {
                chunk,
                level,
                ebw_kbps,
                alpha,
                ..
            } => {
                let ebw = if cbw.is_empty() {
                    r1
                } else {
                    let mut s = 0.0;
                    for v in &cbw {
                        s += v;
                    }
                    s / cbw.len() as f64
                };
                if !rel_close(ebw, ebw_kbps, rtol) {
                    bad.push(format!("event {i}: ebw {ebw_kbps} vs oracle {ebw}"));
                }
                let mut sum = 0.0;
                let mut n = 0;
                for k in 1..chunk {
                    sum += q[k][levels[k]] - q[k - 1][levels[k - 1]];
                    n += 1;
                }
                let a = if n == 0 { 0.0 } else { sum / n as f64 };
                if !rel_close(a, alpha, rtol) {
                    bad.push(format!("event {i}: alpha {alpha} vs oracle {a}"));
                }
                levels.push(level);
            }
            Event::DownloadComplete {
                time,
                chunk,
                level,
                send_time,
                volume_kilobits,
                cbw_kbps,
            } => {
                let v = volumes.volume(chunk, level);
                if v != volume_kilobits {
                    bad.push(format!("event {i}: volume {volume_kilobits} vs {v}"));
                }
                let c = v / (time - send_time);
                if !rel_close(c, cbw_kbps, rtol) {
                    bad.push(format!("event {i}: cbw {cbw_kbps} vs oracle {c}"));
                }
                cbw.push(c);
            }
            _ => {}
        }
    }
    bad
}

/// Fig. 3 written out line by line.
#[allow(clippy::too_many_arguments)]
pub fn fig3(
    chunk: usize,
    b: f64,
    lc: f64,
    ebw: f64,
    alpha: f64,
    prev: usize,
    rates: &[f64],
    q: &[Vec<f64>],
) -> (usize, Reason) {
    if chunk == 0 {
        return (0, Reason::Startup);
    }
    if b <= lc {
        return (0, Reason::CriticalDrop);
    }
    let mut p = 0;
    for (j, r) in rates.iter().enumerate() {
        if *r < ebw {
            p = j;
        }
    }
    let delta = q[chunk][p] - q[chunk - 1][prev];
    if delta > alpha {
        (p, Reason::Upgrade)
    } else {
        (prev, Reason::Hold)
    }
}

/// Bandwidth of a raw sample list at `t`, looping with the period
/// last_ts + last gap.
fn raw_rate(samples: &[(f64, f64)], looped: bool, mut t: f64) -> f64 {
    if looped {
        let n = samples.len();
        let period = if n == 1 {
            1.0
        } else {
            samples[n - 1].0 + (samples[n - 1].0 - samples[n - 2].0)
        };
        t %= period;
    }
    let mut rate = samples[0].1;
    for &(ts, kbps) in samples {
        if ts <= t {
            rate = kbps;
        } else {
            break;
        }
    }
    rate
}

/// Steps forward 1 ms at a time until `volume` kilobits have arrived.
pub fn fixed_step_finish(samples: &[(f64, f64)], looped: bool, start: f64, volume: f64) -> f64 {
    const DT: f64 = 1e-3;
    let mut got = 0.0;
    let mut step: u64 = 0;
    loop {
        let t = start + step as f64 * DT;
        got += raw_rate(samples, looped, t + DT / 2.0) * DT;
        step += 1;
        if got >= volume - 1e-9 {
            return start + step as f64 * DT;
        }
    }
}
