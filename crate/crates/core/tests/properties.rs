use fcco_core::grad::project_ball;
use fcco_core::linalg::{norm, BlockMatrix, Jacobian};
use fcco_core::rng::RngStream;
use fcco_core::sampling::sample_blocks;
use fcco_core::schedule::{HyperParams, Preset, Schedule, ScheduleSpec};
use fcco_core::solver::{adaptive_step, AdaptiveMode, AdaptiveState, RadiusChoice};
use fcco_core::tracker::{msvr_gamma, Snapshot, TrackerInput, TrackerKind, TrackerState};
use fcco_core::verify::{check_storm_case, StormCase};
use proptest::prelude::*;

fn blocks_strategy(m: usize, p: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, p), m)
}

fn case() -> impl Strategy<Value = StormCase> {
    (1usize..12, 1usize..4, 1e-6..=0.5f64).prop_flat_map(|(m, p, beta)| {
        (blocks_strategy(m, p), blocks_strategy(m, p), blocks_strategy(m, p)).prop_map(move |(u, g_now, g_prev)| {
            StormCase {
                m,
                b1: m,
                beta,
                u,
                g_now,
                g_prev,
            }
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn full_sampling_is_storm(c in case()) {
        prop_assert!(check_storm_case(&c).unwrap());
    }

    #[test]
    fn gamma_at_least_storm(m in 1usize..50, frac in 0.0..1.0f64, beta in 1e-6..=0.5f64) {
        let b1 = 1 + ((m - 1) as f64 * frac) as usize;
        let g = msvr_gamma(m, b1, beta).unwrap();
        if b1 == m {
            prop_assert_eq!(g, 1.0 - beta);
        } else {
            prop_assert!(g > 1.0 - beta);
        }
    }

    #[test]
    fn unsampled_blocks_untouched(
        m in 2usize..10,
        seed in any::<u64>(),
        beta in 1e-3..=0.5f64,
        kind_ix in 0usize..5,
    ) {
        let kinds = [TrackerKind::Msvr, TrackerKind::MsvrSp, TrackerKind::MsvrFs, TrackerKind::SoxEma, TrackerKind::NaiveStorm];
        let kind = kinds[kind_ix];
        let p = 2;
        let d = 3;
        let mut rng = RngStream::new(seed, 9).rng();
        let b1 = 1 + (seed as usize % (m - 1));
        let blocks = sample_blocks(m, b1, &mut rng).unwrap();
        let fill = |k: usize| -> Vec<Vec<f64>> {
            (0..m).map(|i| (0..p).map(|c| ((i * 7 + c * 3 + k) % 11) as f64 - 5.0).collect()).collect()
        };
        let u0 = BlockMatrix::from_blocks(&fill(0)).unwrap();
        let g_now: Vec<Vec<f64>> = fill(1).into_iter().take(b1).collect();
        let g_prev: Vec<Vec<f64>> = fill(2).into_iter().take(b1).collect();
        let g_snap: Vec<Vec<f64>> = fill(3).into_iter().take(b1).collect();
        let jacs: Vec<Jacobian> = (0..b1).map(|_| Jacobian::from_row_major(p, d, vec![0.5; p * d]).unwrap()).collect();
        let dw = vec![0.1, -0.2, 0.3];
        let mut state = TrackerState::new(kind, u0.clone());
        if kind.uses_snapshot() {
            state.set_snapshot(Snapshot { point: vec![0.0; d].into(), values: BlockMatrix::from_blocks(&fill(4)).unwrap() }).unwrap();
        }
        let gamma = if kind.is_msvr() { msvr_gamma(m, b1, beta).unwrap() } else { 1.0 - beta };
        let hp = HyperParams { alpha: 1.0, beta, gamma, eta: 0.1, period: 1 };
        let input = TrackerInput {
            blocks: &blocks,
            g_now: &g_now,
            g_prev: Some(&g_prev),
            g_snap: Some(&g_snap),
            jac_now: Some(&jacs),
            dw: Some(&dw),
        };
        state.update(&input, &hp).unwrap();
        for i in 0..m {
            if !blocks.contains(&i) {
                prop_assert_eq!(state.u.block(i), u0.block(i));
            }
        }
    }

    #[test]
    fn block_sample_is_sorted_subset(m in 1usize..200, frac in 0.0..1.0f64, seed in any::<u64>()) {
        let b1 = 1 + ((m - 1) as f64 * frac) as usize;
        let ids = sample_blocks(m, b1, &mut RngStream::new(seed, 1).rng()).unwrap();
        prop_assert_eq!(ids.len(), b1);
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(ids.iter().all(|&i| i < m));
    }

    #[test]
    fn projection_lands_in_ball(v in prop::collection::vec(-100.0..100.0f64, 1..20), r in 1e-3..50.0f64) {
        let p = project_ball(&v, r);
        prop_assert!(norm(&p) <= r * (1.0 + 1e-12));
        if norm(&v) <= r {
            prop_assert_eq!(&p, &v);
        }
        let again = project_ball(&p, r);
        for (a, b) in again.iter().zip(&p) {
            prop_assert!((a - b).abs() <= 1e-12 * r);
        }
    }

    #[test]
    fn amsgrad_second_moment_never_drops(
        zs in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 1..60),
        bp in 0.01..=1.0f64,
    ) {
        let mode = AdaptiveMode::Amsgrad { delta: 1e-3, beta_prime: bp, radius: RadiusChoice::CF };
        let mut state = AdaptiveState::new(&mode, 4).unwrap().unwrap();
        let mut w = vec![0.0; 4];
        let mut prev = vec![0.0; 4];
        for z in &zs {
            adaptive_step(&mut w, z, None, &mut state, 0.1, Some(3.0)).unwrap();
            for (a, b) in state.h.iter().zip(&prev) {
                prop_assert!(a >= b);
            }
            prev = state.h.clone();
        }
    }

    #[test]
    fn driver_keeps_msvr_beta_legal(
        t in 1usize..10_000,
        m in 2usize..100,
        c_beta in 0.1..100.0f64,
        c_eta in 0.1..10.0f64,
        sp in any::<bool>(),
        v2 in any::<bool>(),
    ) {
        let spec = ScheduleSpec {
            preset: if v2 { Preset::V2 } else { Preset::V1 },
            c_beta,
            c_eta,
            ..ScheduleSpec::default()
        };
        let kind = if sp { TrackerKind::MsvrSp } else { TrackerKind::Msvr };
        let mut s = Schedule::new(spec, kind, m, None, 1, 4).unwrap();
        let hp = s.at(t).unwrap();
        prop_assert!(hp.beta > 0.0 && hp.beta <= 0.5);
        prop_assert!((hp.gamma - msvr_gamma(m, 1, hp.beta).unwrap()).abs() <= 1e-12 * hp.gamma);
        if sp {
            prop_assert!(hp.eta <= hp.beta.sqrt() * (1.0 + 1e-12));
        }
    }
}
