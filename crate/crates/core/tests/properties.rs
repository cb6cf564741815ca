use std::sync::Arc;

use proptest::prelude::*;

use drive_robust::latency::{ticks_from_ms, ActionBuffer};
use drive_robust::metrics::{
    driving_score, robustness_degradation, ComfortLimits, MotionStats, Penalties, RouteResult,
};
use drive_robust::perturb::{
    apply_gps_noise, apply_speed_noise, sample_mask, ObsPipeline, PerturbationSpec,
};
use drive_robust::seed::SeedTree;
use drive_robust::types::{Action, Observation, Raster, Vec2};
use drive_robust::world::{
    Infraction, InfractionKind, RouteStatus, RouteSuite, Simulator, WorldConfig,
};

fn obs(stamp: u64, camera: Raster, speed: f64) -> Observation {
    Observation {
        camera,
        gps: Vec2::new(3.0, 4.0),
        speed,
        target_point: Vec2::new(9.0, 4.0),
        compass: 0.3,
        stamp,
    }
}

fn action() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0..=1.0f64, 0.0..=1.0f64, -1.0..=1.0f64)
}

const KINDS: [InfractionKind; 6] = [
    InfractionKind::CollisionVehicle,
    InfractionKind::CollisionStatic,
    InfractionKind::RedLight,
    InfractionKind::RouteDeviation,
    InfractionKind::Blocked,
    InfractionKind::Timeout,
];

fn result(completion: f64, kinds: &[usize]) -> RouteResult {
    let stats = MotionStats::new(ComfortLimits::default(), 10.0, 20);
    let inf = kinds
        .iter()
        .enumerate()
        .map(|(t, &k)| Infraction {
            kind: KINDS[k],
            tick: t as u64,
        })
        .collect();
    RouteResult::new("r", completion, inf, &stats, RouteStatus::Completed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fifo_applies_the_action_from_delay_ticks_ago(
        delay in 0u64..=50,
        seq in prop::collection::vec(action(), 1..200),
    ) {
        let mut buf = ActionBuffer::fixed_ticks(delay);
        let fresh: Vec<Action> = seq
            .iter()
            .enumerate()
            .map(|(t, &(th, br, st))| Action::clamped(th, br, st, t as u64))
            .collect();
        for (t, a) in fresh.iter().enumerate() {
            let applied = buf.push_then_pop(*a, t as u64);
            if (t as u64) < delay {
                prop_assert_eq!(applied, Action::full_brake(0));
            } else {
                prop_assert_eq!(applied, fresh[t - delay as usize]);
            }
        }
    }
}

proptest! {
    #[test]
    fn ticks_from_ms_matches_integer_floor(ms in 0u32..5000, rate in 1u32..200) {
        let expected = (ms as u64 * rate as u64) / 1000;
        prop_assert_eq!(ticks_from_ms(ms as f64, rate), expected);
    }

    #[test]
    fn mask_has_exact_count_and_fits(
        ratio in 0.01..0.99f64,
        w in 1usize..=96,
        h in 1usize..=96,
        seed in any::<u64>(),
        tick in 0u64..10_000,
    ) {
        let mut stream = SeedTree::new(seed).derive_stream("occlusion").unwrap().fork(tick);
        let m = sample_mask(ratio, w, h, &mut stream);
        let expected = (ratio * (w * h) as f64 - 1e-9).ceil() as usize;
        prop_assert_eq!(m.count, expected);
        let mut inside = 0;
        for row in 0..h {
            for col in 0..w {
                if m.contains(col, row) {
                    inside += 1;
                }
            }
        }
        prop_assert_eq!(inside, expected);
        prop_assert!(m.x + m.w <= w && m.y + m.h <= h);
    }

    #[test]
    fn masks_depend_only_on_seed_route_and_tick(
        seed in any::<u64>(),
        tick in 0u64..5000,
        ratio in 0.1..0.9f64,
    ) {
        let spec = PerturbationSpec::occlusion(ratio);
        let tree = SeedTree::new(seed).child("curve_01");
        let clean_a = obs(tick, Raster::filled(64, 64, 0.3), 5.0);
        let clean_b = obs(tick, Raster::filled(64, 64, 0.7), 9.0);
        let (_, log_a) = ObsPipeline::new(std::slice::from_ref(&spec), &tree).unwrap().process(&clean_a).unwrap();
        let (_, log_b) = ObsPipeline::new(&[spec], &tree).unwrap().process(&clean_b).unwrap();
        prop_assert_eq!(log_a.mask, log_b.mask);
    }

    #[test]
    fn speed_noise_never_negative_and_zero_stays_zero(
        v in 0.0..30.0f64,
        mu in 0.0..1.5f64,
        seed in any::<u64>(),
    ) {
        let spec = PerturbationSpec::speed(mu);
        let mut s = SeedTree::new(seed).derive_stream("speed").unwrap();
        let (out, eta) = apply_speed_noise(&obs(0, Raster::filled(2, 2, 0.5), v), &spec, &mut s).unwrap();
        prop_assert!(out.speed >= 0.0);
        prop_assert!((out.speed - (eta * v).max(0.0)).abs() < 1e-12);
        let mut s = SeedTree::new(seed).derive_stream("speed").unwrap();
        let (zero, _) = apply_speed_noise(&obs(0, Raster::filled(2, 2, 0.5), 0.0), &spec, &mut s).unwrap();
        prop_assert_eq!(zero.speed, 0.0);
    }

    #[test]
    fn gps_noise_touches_only_gps(std in 0.0..20.0f64, seed in any::<u64>()) {
        let clean = obs(7, Raster::filled(8, 8, 0.4), 6.0);
        let mut s = SeedTree::new(seed).derive_stream("gps").unwrap();
        let (out, [ex, ey]) = apply_gps_noise(&clean, &PerturbationSpec::gps(std), &mut s).unwrap();
        prop_assert_eq!(&out.camera, &clean.camera);
        prop_assert_eq!(out.speed, clean.speed);
        prop_assert_eq!(out.compass, clean.compass);
        prop_assert_eq!(out.gps, Vec2::new(clean.gps.x + ex, clean.gps.y + ey));
    }

    #[test]
    fn burst_frames_are_always_earlier_clean_frames(
        len in 1u64..80,
        p in 0.0..0.5f64,
        seed in any::<u64>(),
    ) {
        let mut spec = PerturbationSpec::burst(len);
        spec.burst_probability = p;
        let mut pipe = ObsPipeline::new(&[spec], &SeedTree::new(seed).child("r")).unwrap();
        let frame = |t: u64| {
            let mut r = Raster::filled(4, 4, 0.2);
            r.set(0, 0, 0.001 * (t + 1) as f32);
            r
        };
        for t in 0..300u64 {
            let (out, _) = pipe.process(&obs(t, frame(t), 5.0)).unwrap();
            prop_assert_eq!(out.stamp, t);
            prop_assert!(!out.camera.is_all_zero());
            prop_assert!((0..=t).any(|s| out.camera == frame(s)));
        }
    }

    #[test]
    fn forked_streams_do_not_depend_on_draw_history(
        seed in any::<u64>(),
        tick in any::<u64>(),
        burn in 0usize..50,
    ) {
        let parent = SeedTree::new(seed).derive_stream("gps").unwrap();
        let mut used = parent.clone();
        for _ in 0..burn {
            used.next_u64();
        }
        let a: Vec<u64> = { let mut f = parent.fork(tick); (0..4).map(|_| f.next_u64()).collect() };
        let b: Vec<u64> = { let mut f = SeedTree::new(seed).derive_stream("gps").unwrap().fork(tick); (0..4).map(|_| f.next_u64()).collect() };
        prop_assert_eq!(a, b);
    }

    #[test]
    fn each_family_touches_only_its_channel(
        seed in any::<u64>(),
        family in 0usize..4,
        tick in 1u64..1000,
    ) {
        let spec = match family {
            0 => PerturbationSpec::burst(5),
            1 => PerturbationSpec::occlusion(0.5),
            2 => PerturbationSpec::gps(5.0),
            _ => PerturbationSpec::speed(0.5),
        };
        let mut pipe = ObsPipeline::new(&[spec], &SeedTree::new(seed).child("r")).unwrap();
        let clean = obs(tick, Raster::filled(16, 16, 0.5), 7.0);
        let (out, _) = pipe.process(&clean).unwrap();
        prop_assert_eq!(out.stamp, clean.stamp);
        prop_assert_eq!(out.target_point, clean.target_point);
        prop_assert_eq!(out.compass, clean.compass);
        if family != 2 {
            prop_assert_eq!(out.gps, clean.gps);
        }
        if family != 3 {
            prop_assert_eq!(out.speed, clean.speed);
        }
        if family >= 2 {
            prop_assert_eq!(&out.camera, &clean.camera);
        }
    }

    #[test]
    fn ds_is_bounded_and_infractions_never_help(
        completion in 0.0..=1.0f64,
        kinds in prop::collection::vec(0usize..6, 0..6),
        extra in 0usize..6,
    ) {
        let p = Penalties::default();
        let base = result(completion, &kinds);
        let ds = driving_score(&base, &p);
        prop_assert!((0.0..=100.0).contains(&ds));
        let mut more = kinds.clone();
        more.push(extra);
        prop_assert!(driving_score(&result(completion, &more), &p) <= ds + 1e-12);
    }

    #[test]
    fn rd_is_relative_drop(clean in 0.01..100.0f64, ds in 0.0..100.0f64) {
        let rd = robustness_degradation(ds, clean).unwrap();
        prop_assert!((rd - (clean - ds) / clean).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn progress_never_decreases(seq in prop::collection::vec(action(), 1..300)) {
        let suite = RouteSuite::bundled();
        let sim = Simulator::new(Arc::new(suite.get("s_curve_01").unwrap().clone()), WorldConfig::default());
        let mut state = sim.initial_state();
        for (t, &(th, br, st)) in seq.iter().enumerate() {
            let next = sim.step(&state, &Action::clamped(th, br, st, t as u64));
            prop_assert!(next.route_progress >= state.route_progress);
            prop_assert!(next.ego.position.is_finite());
            state = next;
        }
    }
}
