mod common;

use proptest::prelude::*;
use sba_core::abr::{bba_decide, festive_decide, sba_decide, BbaParams, BbaState, FestiveParams, FestiveState, SbaParams};
use sba_core::simulator::Event;
use sba_core::{run_session, BitrateLadder, Observation, PolicyId, PolicyParams, PolicyState, Reason, VideoManifest};

/// Ladder, dyadic SSIM rows (so shifting by a dyadic constant is exact),
/// and the chunk index the observation is for.
fn setup() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, usize)> {
    (2usize..12, 1usize..6).prop_flat_map(|(levels, chunk)| {
        let ladder = prop::collection::vec(1.1f64..2.0, levels).prop_map(|steps| {
            let mut rate = 200.0;
            steps
                .into_iter()
                .map(|s| {
                    let r = rate;
                    rate = (rate * s).round();
                    r
                })
                .collect::<Vec<f64>>()
        });
        let rows = prop::collection::vec(prop::collection::vec((512u32..=960).prop_map(|k| k as f64 / 1024.0), levels), chunk + 1);
        (ladder, rows, Just(chunk))
    })
}

fn manifest(ladder: &[f64], rows: Vec<Vec<f64>>) -> VideoManifest {
    VideoManifest::new(4.0, BitrateLadder::new(ladder.to_vec()).unwrap(), rows, None).unwrap()
}

fn observe<'a>(m: &'a VideoManifest, chunk: usize, b: f64, lc: f64, prev: usize, ebw: f64, alpha: f64) -> Observation<'a> {
    Observation {
        chunk,
        buffer_s: b,
        buffer_capacity_s: 120.0,
        critical_s: lc,
        prev_level: Some(prev.min(m.level_count() - 1)),
        ebw_kbps: ebw,
        alpha,
        manifest: m,
    }
}

proptest! {
    #[test]
    fn critical_zone_forces_level_zero((ladder, rows, chunk) in setup(), lc in 1.0..60.0, frac in 0.0..=1.0, prev in 0usize..12, ebw in 1.0..20_000.0, alpha in -0.5..0.5) {
        let m = manifest(&ladder, rows);
        let d = sba_decide(&observe(&m, chunk, lc * frac, lc, prev, ebw, alpha), &SbaParams::default());
        prop_assert_eq!(d.level, 0);
        prop_assert_eq!(d.reason, Reason::CriticalDrop);
    }

    #[test]
    fn upgrade_stays_below_estimate((ladder, rows, chunk) in setup(), b in 13.0..120.0, prev in 0usize..12, ebw in 1.0..20_000.0, alpha in -0.5..0.5) {
        let m = manifest(&ladder, rows);
        let obs = observe(&m, chunk, b, 12.0, prev, ebw, alpha);
        let d = sba_decide(&obs, &SbaParams::default());
        match d.reason {
            Reason::Upgrade => {
                if ladder[0] < ebw {
                    prop_assert!(ladder[d.level] < ebw);
                    prop_assert!(d.level + 1 == ladder.len() || ladder[d.level + 1] >= ebw);
                } else {
                    prop_assert_eq!(d.level, 0);
                }
            }
            Reason::Hold => prop_assert_eq!(Some(d.level), obs.prev_level),
            other => prop_assert!(false, "unexpected reason {:?}", other),
        }
    }

    #[test]
    fn upgrade_only_never_lowers((ladder, rows, chunk) in setup(), b in 13.0..120.0, prev in 0usize..12, ebw in 1.0..20_000.0, alpha in -0.5..0.5) {
        let m = manifest(&ladder, rows);
        let obs = observe(&m, chunk, b, 12.0, prev, ebw, alpha);
        let d = sba_decide(&obs, &SbaParams { upgrade_only: true });
        prop_assert!(d.level >= obs.prev_level.unwrap());
    }

    #[test]
    fn shifting_all_ssim_keeps_decisions((ladder, rows, chunk) in setup(), shift in -64i32..64, b in 0.0..120.0, prev in 0usize..12, ebw in 1.0..20_000.0, alpha_k in -64i32..64) {
        let c = shift as f64 / 1024.0;
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|q| q + c).collect()).collect();
        let (a, b_m) = (manifest(&ladder, rows), manifest(&ladder, shifted));
        let alpha = alpha_k as f64 / 1024.0;
        let p = SbaParams::default();
        prop_assert_eq!(
            sba_decide(&observe(&a, chunk, b, 12.0, prev, ebw, alpha), &p),
            sba_decide(&observe(&b_m, chunk, b, 12.0, prev, ebw, alpha), &p)
        );
    }

    #[test]
    fn bba_is_monotone_in_buffer(levels in 2usize..12, bs in 20.0..300.0, b1 in 0.0..1.0, b2 in 0.0..1.0) {
        let ladder: Vec<f64> = (0..levels).map(|i| 235.0 * 1.5f64.powi(i as i32)).collect();
        let m = manifest(&ladder, vec![vec![0.9; levels]; 2]);
        let state = BbaState::new(&BbaParams::default(), bs);
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let d_lo = bba_decide(&observe(&m, 1, lo * bs, 12.0, 0, 1000.0, 0.0), &state);
        let d_hi = bba_decide(&observe(&m, 1, hi * bs, 12.0, 0, 1000.0, 0.0), &state);
        prop_assert!(d_lo.level <= d_hi.level);
    }

    #[test]
    fn festive_moves_one_step(history in prop::collection::vec(50.0f64..20_000.0, 1..12), prev in 0usize..10) {
        let m = manifest(BitrateLadder::netflix().rates(), vec![vec![0.9; 10]; 2]);
        let mut state = FestiveState::new(&FestiveParams::default());
        for h in history {
            state.push(h);
        }
        let d = festive_decide(&observe(&m, 1, 50.0, 12.0, prev, 1000.0, 0.0), &state);
        prop_assert!(d.level.abs_diff(prev) <= 1);
    }
}

#[test]
fn ssim_shift_leaves_whole_sessions_unchanged() {
    for seed in 0..40 {
        let (m, trace, mut config) = common::random_session(500 + seed);
        config.policy = PolicyId::Sba;
        // snap rows to a 1/1024 grid so every delta survives the shift exactly
        let grid: Vec<Vec<f64>> = m.ssim_matrix().iter().map(|r| r.iter().map(|q| (q * 512.0).round() / 1024.0 + 0.25).collect()).collect();
        let base = VideoManifest::new(m.chunk_duration(), m.ladder().clone(), grid.clone(), None).unwrap();
        let up = VideoManifest::new(m.chunk_duration(), m.ladder().clone(), grid.iter().map(|r| r.iter().map(|q| q + 0.125).collect()).collect(), None).unwrap();
        let levels = |m: &VideoManifest| -> Vec<usize> {
            run_session(m, &trace, &config).unwrap().log.events.iter().filter_map(|e| match e {
                Event::FetchIssued { level, .. } => Some(*level),
                _ => None,
            }).collect()
        };
        assert_eq!(levels(&base), levels(&up), "seed {seed}");
    }
}

#[test]
fn festive_sessions_never_jump() {
    for seed in 0..100 {
        let (m, trace, mut config) = common::random_session(900 + seed);
        config.policy = PolicyId::Festive;
        let log = run_session(&m, &trace, &config).unwrap().log;
        let levels: Vec<usize> = log.events.iter().filter_map(|e| match e {
            Event::FetchIssued { level, .. } => Some(*level),
            _ => None,
        }).collect();
        assert!(levels.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1), "seed {seed}: {levels:?}");
    }
}

#[test]
fn decisions_are_pure() {
    let m = sba_core::scenario::scenario_manifest();
    for id in PolicyId::ALL {
        let mut state = PolicyState::new(id, &PolicyParams::default(), 120.0);
        state.on_download(3000.0, 2.5);
        let obs = observe(&m, 5, 40.0, 12.0, 4, 3100.0, 0.001);
        let snapshot = state.clone();
        assert_eq!(state.decide(&obs), state.decide(&obs));
        assert_eq!(state, snapshot);
        assert!(sba_core::abr::decide(id, &obs, &state).is_ok());
    }
    let bba = PolicyState::new(PolicyId::Bba, &PolicyParams::default(), 120.0);
    let obs = observe(&m, 5, 40.0, 12.0, 4, 3100.0, 0.0);
    assert!(sba_core::abr::decide(PolicyId::Sba, &obs, &bba).is_err());
    assert!("nope".parse::<PolicyId>().is_err());
}
