mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix1, Matrix2, Matrix3, Matrix3x2, Point2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikewall_core::harness::cases::{build_trajectory, run_tracking, ControllerKind};
use spikewall_core::harness::metrics::{compute_metrics, StepRecord};
use spikewall_core::harness::room::{raycast_lidar, RoomSpec};
use spikewall_core::harness::ScenarioConfig;
use spikewall_core::lqr::{linearize, riccati_iterate, solve_dare, DEFAULT_MAX_ITER};
use spikewall_core::snn::{init_population, PesRule};
use spikewall_core::spline::{eval, SplineCurve};
use spikewall_core::{LifParams, LqrWeights, Pose, Twist};

use common::*;

const ROOM: &str = include_str!("../data/room_v1.toml");

fn random_system(rng: &mut ChaCha8Rng) -> (Matrix3<f64>, Matrix3x2<f64>, Matrix3<f64>, Matrix2<f64>) {
    let a = Matrix3::from_fn(|_, _| rng.random_range(-1.2..1.2));
    let b = Matrix3x2::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let mq = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let mr = Matrix2::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let q = mq.transpose() * mq + Matrix3::identity() * 0.1;
    let r = mr.transpose() * mr + Matrix2::identity() * 0.1;
    (a, b, q, r)
}

fn to_dyn<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

#[test]
fn riccati_iteration_matches_doubling_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let (a, b, q, r) = random_system(&mut rng);
        let sol = riccati_iterate(&a, &b, &q, &r, &q, 1e-13, DEFAULT_MAX_ITER).unwrap();
        let oracle = dare_sda(&to_dyn(&a), &to_dyn(&b), &to_dyn(&q), &to_dyn(&r));
        let rel = (to_dyn(&sol.p) - &oracle).norm() / oracle.norm();
        assert!(rel < 1e-6, "system {case}: relative error {rel}");
    }
}

#[test]
fn scalar_riccati_is_golden_ratio() {
    let one = Matrix1::new(1.0);
    let sol = riccati_iterate(&one, &one, &one, &one, &one, 1e-15, DEFAULT_MAX_ITER).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((sol.p[(0, 0)] - phi).abs() < 1e-9);
}

#[test]
fn nominal_tracking_model_matches_oracle() {
    let model = linearize(&Pose::new(0.0, 0.0, 0.0), &Twist::new(1.0, 0.0), 0.05).unwrap();
    let w = LqrWeights::default();
    let gain = solve_dare(&model, &w, 1e-12, DEFAULT_MAX_ITER).unwrap();
    let oracle = dare_sda(&to_dyn(&model.a), &to_dyn(&model.b), &to_dyn(&w.q), &to_dyn(&w.r));
    let diff = (to_dyn(&gain.p) - oracle).abs().max();
    assert!(diff < 1e-6, "elementwise difference {diff}");
}

#[test]
fn spline_evaluation_matches_de_boor() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for degree in 1..=4 {
        let ctrl: Vec<Point2<f64>> = (0..9)
            .map(|_| Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let curve = SplineCurve::new(ctrl.clone(), degree).unwrap();
        for j in 0..=200 {
            let t = j as f64 / 200.0;
            let got = eval(&curve, t).unwrap();
            let want = de_boor(curve.knots(), &ctrl, degree, t);
            assert!((got - want).norm() < 1e-12, "degree {degree}, t {t}");
        }
    }
}

#[test]
fn lidar_matches_ray_marcher() {
    let room = RoomSpec::from_toml(ROOM).unwrap();
    let pose = Pose::new(0.0, 0.0, 0.0);
    let scan = raycast_lidar(&room, &pose).unwrap();
    assert_eq!(scan.len(), 360);
    for ret in &scan {
        let marched = ray_march(&room, &pose.position(), ret.bearing, 1e-3, room.lidar.max_range)
            .expect("marcher finds an obstacle");
        assert!((ret.range - marched).abs() < 0.01, "bearing {}: {} vs {marched}", ret.bearing, ret.range);
    }
}

#[test]
fn lidar_matches_ray_marcher_off_centre() {
    let room = RoomSpec::from_toml(ROOM).unwrap();
    let pose = Pose::new(-0.9, 1.1, 2.0);
    for ret in raycast_lidar(&room, &pose).unwrap() {
        let marched = ray_march(&room, &pose.position(), pose.theta + ret.bearing, 1e-3, room.lidar.max_range).unwrap();
        assert!((ret.range - marched).abs() < 0.01);
    }
}

/// Measured steady rate of one neuron driven at `current`, from precise spike times.
fn measured_rate(params: LifParams, current: f64, dt_n: f64) -> f64 {
    let mut pop = init_population(1, 3, params).unwrap();
    let j0 = pop.currents(0.0).next().unwrap();
    let j1 = pop.currents(1.0).next().unwrap();
    let a = (current - j0) / (j1 - j0);
    pop.record_spikes(true);
    let steps = (2.0 / dt_n).round() as usize;
    for _ in 0..steps {
        pop.lif_step(a, dt_n);
    }
    let times: Vec<f64> = pop.take_raster().into_iter().map(|(t, _)| t).filter(|t| *t > 0.2).collect();
    (times.len() - 1) as f64 / (times[times.len() - 1] - times[0])
}

#[test]
fn lif_rate_matches_closed_form() {
    let p = LifParams::default();
    for k in 0..10 {
        let current = 1.1 + 0.4 * k as f64;
        let want = lif_rate(p.tau_ref, p.tau_d, p.r_m, p.v_th, current);
        let got = measured_rate(p, current, 1e-4);
        assert!((got - want).abs() / want < 0.02, "J = {current}: {got} vs {want}");
    }
}

#[test]
fn filtered_activity_averages_to_rate() {
    let p = LifParams::default();
    let mut pop = init_population(1, 9, p).unwrap();
    let a = 0.8;
    let current = pop.currents(a).next().unwrap();
    let dt_n = 1e-4;
    let mut sum = 0.0;
    let mut n = 0;
    for k in 0..30_000 {
        pop.substep(a, dt_n);
        if k >= 10_000 {
            sum += pop.activities()[0];
            n += 1;
        }
    }
    let want = lif_rate(p.tau_ref, p.tau_d, p.r_m, p.v_th, current);
    assert!(current > p.v_th);
    assert!((sum / n as f64 - want).abs() / want < 0.02);
}

#[test]
fn pes_drives_decoded_value_to_target() {
    let mut pop = init_population(100, 4, LifParams::default()).unwrap();
    let rule = PesRule {
        learning_rate: 1e-7,
        enabled: true,
    };
    let (a, target, dt_n) = (0.5, 0.3, 1e-3);
    let mut errors = Vec::new();
    for _ in 0..3000 {
        pop.substep(a, dt_n);
        let e = pop.decode() - target;
        pop.pes_update(e, &rule);
        errors.push(e);
    }
    assert!(errors.last().unwrap().abs() < 0.05);
    let windows = windowed_mse(&errors, 100);
    for w in windows[1..].windows(2) {
        assert!(w[1] <= w[0] + PES_NOISE_FLOOR, "{windows:?}");
    }
}

#[test]
fn mae_is_stable_under_subsampling() {
    let cfg = ScenarioConfig::from_toml(include_str!("../../../configs/case_b.toml")).unwrap();
    let run = run_tracking(&cfg, ControllerKind::Snn).unwrap();
    let traj = build_trajectory(&cfg.reference).unwrap();
    let full = compute_metrics(&run.records, &traj, 0.0, (0.05, 0.05)).mae;
    let half: Vec<StepRecord> = run.records.iter().step_by(2).copied().collect();
    let sub = compute_metrics(&half, &traj, 0.0, (0.05, 0.05)).mae;
    assert!((sub - full).abs() / full < 0.01, "{full} vs {sub}");
}

#[test]
fn mae_is_stable_under_reference_refinement() {
    let cfg = ScenarioConfig::from_toml(include_str!("../../../configs/case_b.toml")).unwrap();
    let run = run_tracking(&cfg, ControllerKind::Lqr).unwrap();
    let mut fine = cfg.reference.clone();
    if let spikewall_core::harness::ReferenceSpec::Sinusoid { samples, .. } = &mut fine {
        *samples *= 4;
    }
    let coarse = compute_metrics(&run.records, &build_trajectory(&cfg.reference).unwrap(), 0.0, (0.05, 0.05)).mae;
    let fine = compute_metrics(&run.records, &build_trajectory(&fine).unwrap(), 0.0, (0.05, 0.05)).mae;
    assert!((coarse - fine).abs() / fine < 0.01);
}

#[test]
fn circle_offset_contour_distance() {
    // A single cylinder in a large room: the contour distance is | |p - c| - (r + d) |
    // away from the walls.
    let mut room = RoomSpec::from_toml(ROOM).unwrap();
    room.side = 40.0;
    room.cylinders.truncate(1);
    room.cylinders[0].center = [0.0, 0.0];
    room.cylinders[0].radius = 1.0;
    let d = 0.18;
    let set = spikewall_core::harness::room::PolylineSet::new(room.offset_contour(d, 0.001));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let ang = rng.random_range(-PI..PI);
        let rad = rng.random_range(1.0..3.0);
        let p = Point2::new(rad * ang.cos(), rad * ang.sin());
        let want = (rad - (1.0 + d)).abs();
        assert!((set.distance(&p) - want).abs() < 1e-5);
    }
}
