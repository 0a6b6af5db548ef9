//! Oracle and property tests: the integrator against an independent
//! reference, metrics against brute force, wrapping and distribution
//! invariants, and checkpoint round-trips.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use vrd_core::autodiff::{softmax_slice, wrap_angle, ParamStore, Tensor};
use vrd_core::kinematics::{integrate, KinematicCommand, KinematicState};
use vrd_core::metrics::{actor_mr, min_ade, min_fde};

/// Independent forward-Euler reference for the integrator.
fn reference_step(s: (f64, f64, f64, f64), a: f64, w: f64, dt: f64) -> (f64, f64, f64, f64) {
    let (x, y, psi, v) = s;
    let v2 = f64::max(0.0, v + a * dt);
    let mut p2 = psi + w * dt;
    while p2 > PI {
        p2 -= 2.0 * PI;
    }
    while p2 <= -PI {
        p2 += 2.0 * PI;
    }
    (x + v2 * p2.cos() * dt, y + v2 * p2.sin() * dt, p2, v2)
}

#[test]
fn integrator_matches_reference_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10_000 {
        let s = KinematicState {
            x: rng.gen_range(-100.0..100.0),
            y: rng.gen_range(-100.0..100.0),
            heading: rng.gen_range(-PI..=PI),
            speed: rng.gen_range(0.0..30.0),
        };
        let c = KinematicCommand {
            accel: rng.gen_range(-10.0..10.0),
            turn_rate: rng.gen_range(-1.5..1.5),
        };
        let dt = [0.1, 0.2, 0.5][rng.gen_range(0..3)];
        let out = integrate(s, c, dt).unwrap();
        let (rx, ry, rp, rv) = reference_step((s.x, s.y, s.heading, s.speed), c.accel, c.turn_rate, dt);
        assert!((out.x - rx).abs() < 1e-12);
        assert!((out.y - ry).abs() < 1e-12);
        assert!((out.heading - rp).abs() < 1e-12);
        assert!((out.speed - rv).abs() < 1e-12);

        // invariants
        assert!(out.speed >= 0.0);
        assert!(out.heading > -PI && out.heading <= PI);
        assert!(out.is_finite());
        let disp = ((out.x - s.x).powi(2) + (out.y - s.y).powi(2)).sqrt();
        assert!(disp <= out.speed * dt + 1e-12);
    }
}

#[test]
fn smooth_l1_branches_agree_at_unit_error() {
    // quadratic and linear branches meet at |d| = 1
    let quad = 0.5 * 1.0f64 * 1.0;
    let lin = 1.0f64 - 0.5;
    assert!((quad - lin).abs() < 1e-12);

    let mut tape = vrd_core::autodiff::Tape::new();
    let below = {
        let a = tape.leaf(Tensor::vector(vec![1.0 - 1e-9])).unwrap();
        let b = tape.constant(Tensor::vector(vec![0.0])).unwrap();
        let l = tape.smooth_l1_sum(a, b).unwrap();
        tape.value(l).item()
    };
    let above = {
        let a = tape.leaf(Tensor::vector(vec![1.0 + 1e-9])).unwrap();
        let b = tape.constant(Tensor::vector(vec![0.0])).unwrap();
        let l = tape.smooth_l1_sum(a, b).unwrap();
        tape.value(l).item()
    };
    assert!((below - above).abs() < 1e-8);
    assert!((below - 0.5).abs() < 1e-8);
}

/// Brute-force metric computation, written independently of the library.
fn brute_force(preds: &[Vec<[f64; 2]>], gt: &[[f64; 2]]) -> (f64, f64, bool) {
    let mut best_ade = f64::INFINITY;
    let mut best_fde = f64::INFINITY;
    for p in preds {
        let mut acc = 0.0;
        for (a, b) in p.iter().zip(gt) {
            acc += ((a[0] - b[0]).hypot(a[1] - b[1])).abs();
        }
        best_ade = best_ade.min(acc / gt.len() as f64);
        let l = p.len() - 1;
        best_fde = best_fde.min((p[l][0] - gt[l][0]).hypot(p[l][1] - gt[l][1]));
    }
    (best_ade, best_fde, best_fde > 2.0)
}

#[test]
fn metrics_match_brute_force_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let steps = rng.gen_range(1..30);
        let k = rng.gen_range(1..7);
        let agents = rng.gen_range(1..6);
        let mut per_agent = Vec::new();
        let mut expected_ade = 0.0;
        let mut expected_fde = 0.0;
        let mut expected_misses = 0usize;
        for _ in 0..agents {
            let gt: Vec<[f64; 2]> =
                (0..steps).map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)]).collect();
            let preds: Vec<Vec<[f64; 2]>> = (0..k)
                .map(|_| {
                    (0..steps)
                        .map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)])
                        .collect()
                })
                .collect();
            let (a, f, miss) = brute_force(&preds, &gt);
            expected_ade += a;
            expected_fde += f;
            expected_misses += miss as usize;
            per_agent.push((preds, gt));
        }
        let n = per_agent.len() as f64;
        assert!((min_ade(&per_agent).unwrap() - expected_ade / n).abs() < 1e-9);
        assert!((min_fde(&per_agent).unwrap() - expected_fde / n).abs() < 1e-9);
        assert!((actor_mr(&per_agent, 2.0).unwrap() - expected_misses as f64 / n).abs() < 1e-9);
    }
}

#[test]
fn metrics_invariant_under_rigid_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let steps = rng.gen_range(2..20);
        let gt: Vec<[f64; 2]> =
            (0..steps).map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]).collect();
        let preds: Vec<Vec<[f64; 2]>> = (0..3)
            .map(|_| (0..steps).map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]).collect())
            .collect();
        let theta: f64 = rng.gen_range(-PI..PI);
        let (tx, ty) = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let xf = |p: &[f64; 2]| {
            [
                p[0] * theta.cos() - p[1] * theta.sin() + tx,
                p[0] * theta.sin() + p[1] * theta.cos() + ty,
            ]
        };
        let gt2: Vec<[f64; 2]> = gt.iter().map(xf).collect();
        let preds2: Vec<Vec<[f64; 2]>> = preds.iter().map(|t| t.iter().map(xf).collect()).collect();
        let before = vec![(preds, gt)];
        let after = vec![(preds2, gt2)];
        assert!((min_ade(&before).unwrap() - min_ade(&after).unwrap()).abs() < 1e-9);
        assert!((min_fde(&before).unwrap() - min_fde(&after).unwrap()).abs() < 1e-9);
        assert!((actor_mr(&before, 2.0).unwrap() - actor_mr(&after, 2.0).unwrap()).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn wrap_angle_lands_in_range(a in -1e3f64..1e3) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let turns = (w - a) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn wrap_angle_is_idempotent(a in -1e3f64..1e3) {
        let w = wrap_angle(a);
        prop_assert_eq!(wrap_angle(w), w);
    }

    #[test]
    fn softmax_is_a_distribution(v in proptest::collection::vec(-30.0f64..30.0, 1..20)) {
        let p = softmax_slice(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn integrator_speed_never_negative(
        v in 0.0f64..30.0,
        a in -20.0f64..20.0,
        dt in prop::sample::select(vec![0.1, 0.2, 0.5]),
    ) {
        let s = KinematicState { x: 0.0, y: 0.0, heading: 0.0, speed: v };
        let c = KinematicCommand::clamped(a, 0.0);
        let out = integrate(s, c, dt).unwrap();
        prop_assert!(out.speed >= 0.0);
    }

    #[test]
    fn checkpoint_round_trip_is_exact(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let dir = std::env::temp_dir().join(format!("vrd-prop-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.json");
        let mut a = ParamStore::new();
        let n = values.len();
        a.register("p.w", Tensor::vector(values.clone()));
        vrd_core::autodiff::checkpoint::save(&a, &path).unwrap();
        let mut b = ParamStore::new();
        b.register("p.w", Tensor::zeros(vec![n]));
        vrd_core::autodiff::checkpoint::load(&mut b, &path).unwrap();
        let loaded = &b.get("p.w").unwrap().value.data;
        prop_assert!(loaded.iter().zip(&values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
