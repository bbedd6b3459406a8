//! Differential-drive plant: kinematics, wheel speeds, saturation, actuator
//! faults and the noisy pose sensor.

use std::f64::consts::PI;
use std::ops::Add;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Euler substeps the plant takes per controller period.
pub const PLANT_SUBSTEPS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("wheel distance must be positive, got {0}")]
    InvalidTrackWidth(f64),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
}

/// Wraps an angle to `(-pi, pi]`. Angles already in range are returned unchanged.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Vehicle pose `(x, y, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> nalgebra::Point2<f64> {
        nalgebra::Point2::new(self.x, self.y)
    }
}

/// Body velocity command `(v, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub v: f64,
    pub omega: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

impl Add for Twist {
    type Output = Twist;

    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.v + rhs.v, self.omega + rhs.omega)
    }
}

/// Right and left wheel ground speeds for a given wheel distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelSpeeds {
    pub right: f64,
    pub left: f64,
    pub track_width: f64,
}

/// Inverts `v = (v_R + v_L) / 2`, `omega = (v_L - v_R) / L`.
pub fn twist_to_wheels(t: Twist, track_width: f64) -> Result<WheelSpeeds, VehicleError> {
    if !(track_width > 0.0) {
        return Err(VehicleError::InvalidTrackWidth(track_width));
    }
    let half = t.omega * track_width / 2.0;
    Ok(WheelSpeeds {
        right: t.v - half,
        left: t.v + half,
        track_width,
    })
}

pub fn wheels_to_twist(w: WheelSpeeds) -> Twist {
    Twist::new((w.right + w.left) / 2.0, (w.left - w.right) / w.track_width)
}

/// Clamps `|omega|` to `omega_max`, scaling `v` by the same factor so the
/// commanded path curvature is kept.
pub fn saturate(t: Twist, omega_max: f64) -> Twist {
    if t.omega.abs() <= omega_max {
        return t;
    }
    let scale = omega_max / t.omega.abs();
    Twist::new(t.v * scale, omega_max.copysign(t.omega))
}

/// Actuator fault and sensor noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// Fraction of the commanded angular velocity the actuators deliver.
    pub actuator_gain_omega: f64,
    /// Position measurement noise standard deviation (m).
    pub sensor_sigma_pos: f64,
    /// Heading measurement noise standard deviation (rad).
    pub sensor_sigma_theta: f64,
    pub rng_seed: u64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            actuator_gain_omega: 1.0,
            sensor_sigma_pos: 0.0,
            sensor_sigma_theta: 0.0,
            rng_seed: 0,
        }
    }
}

impl DisturbanceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.actuator_gain_omega) {
            return Err(format!(
                "actuator_gain_omega must lie in [0, 1], got {}",
                self.actuator_gain_omega
            ));
        }
        if !(self.sensor_sigma_pos >= 0.0 && self.sensor_sigma_theta >= 0.0) {
            return Err("sensor noise standard deviations must be non-negative".into());
        }
        Ok(())
    }
}

pub fn apply_disturbance(t: Twist, cfg: &DisturbanceConfig) -> Twist {
    Twist::new(t.v, t.omega * cfg.actuator_gain_omega)
}

/// One controller period of the plant, integrated with [`PLANT_SUBSTEPS`]
/// forward-Euler substeps.
pub fn step(p: Pose, t: Twist, dt: f64) -> Result<Pose, VehicleError> {
    step_with_substeps(p, t, dt, PLANT_SUBSTEPS)
}

pub fn step_with_substeps(
    p: Pose,
    t: Twist,
    dt: f64,
    substeps: usize,
) -> Result<Pose, VehicleError> {
    if !(dt > 0.0) {
        return Err(VehicleError::InvalidTimeStep(dt));
    }
    let h = dt / substeps.max(1) as f64;
    let mut q = p;
    for _ in 0..substeps.max(1) {
        q = euler_step(q, t, h);
    }
    Ok(q)
}

fn euler_step(p: Pose, t: Twist, h: f64) -> Pose {
    let (sin, cos) = p.theta.sin_cos();
    Pose {
        x: p.x + h * t.v * cos,
        y: p.y + h * t.v * sin,
        theta: wrap_angle(p.theta + h * t.omega),
    }
}

/// Noisy onboard pose measurement. The true state is not modified.
pub fn sense<R: Rng + ?Sized>(p: &Pose, cfg: &DisturbanceConfig, rng: &mut R) -> Pose {
    let mut m = *p;
    if cfg.sensor_sigma_pos > 0.0 {
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        m.x += cfg.sensor_sigma_pos * nx;
        m.y += cfg.sensor_sigma_pos * ny;
    }
    if cfg.sensor_sigma_theta > 0.0 {
        let nt: f64 = rng.sample(StandardNormal);
        m.theta = wrap_angle(m.theta + cfg.sensor_sigma_theta * nt);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(2.0 * PI - 0.1), -0.1, epsilon = 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn wheel_conversion() {
        let w = twist_to_wheels(Twist::new(1.0, 0.0), 0.3).unwrap();
        assert_eq!((w.right, w.left), (1.0, 1.0));
        let w = twist_to_wheels(Twist::new(1.0, 1.0), 0.3).unwrap();
        assert_abs_diff_eq!(w.left, 1.15, epsilon = 1e-15);
        assert_abs_diff_eq!(w.right, 0.85, epsilon = 1e-15);
        assert_eq!(
            twist_to_wheels(Twist::new(1.0, 1.0), 0.0),
            Err(VehicleError::InvalidTrackWidth(0.0))
        );
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturate(Twist::new(1.0, 2.0), 1.0), Twist::new(0.5, 1.0));
        assert_eq!(saturate(Twist::new(1.0, 0.5), 1.0), Twist::new(1.0, 0.5));
        let s = saturate(Twist::new(1.0, -3.0), 1.0);
        assert_abs_diff_eq!(s.v, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s.omega, -1.0);
    }

    #[test]
    fn disturbance_gain() {
        let mut cfg = DisturbanceConfig {
            actuator_gain_omega: 0.5,
            ..Default::default()
        };
        assert_eq!(apply_disturbance(Twist::new(1.0, 1.0), &cfg), Twist::new(1.0, 0.5));
        cfg.actuator_gain_omega = 1.0;
        assert_eq!(apply_disturbance(Twist::new(0.3, -0.7), &cfg), Twist::new(0.3, -0.7));
        cfg.actuator_gain_omega = 0.0;
        assert_eq!(apply_disturbance(Twist::new(0.3, -0.7), &cfg).omega, 0.0);
    }

    #[test]
    fn step_examples() {
        let p = step(Pose::new(0.0, 0.0, 0.0), Twist::new(1.0, 0.0), 0.05).unwrap();
        assert_abs_diff_eq!(p.x, 0.05, epsilon = 1e-15);
        assert_eq!((p.y, p.theta), (0.0, 0.0));
        let p = step(Pose::new(0.0, 0.0, 0.0), Twist::new(0.0, 1.0), 0.05).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert_abs_diff_eq!(p.theta, 0.05, epsilon = 1e-15);
        assert_eq!(
            step(Pose::new(0.0, 0.0, 0.0), Twist::ZERO, 0.0),
            Err(VehicleError::InvalidTimeStep(0.0))
        );
    }

    #[test]
    fn full_circle_closes() {
        // fine-step reference integration
        let total = 2.0 * PI;
        let twist = Twist::new(1.0, 1.0);
        let fine = {
            let mut q = Pose::new(0.0, 0.0, 0.0);
            let h = 1e-5;
            let n = (total / h).round() as usize;
            for _ in 0..n {
                q = euler_step(q, twist, h);
            }
            q
        };
        assert!(fine.x.hypot(fine.y) < 1e-4);

        let dt = 0.05;
        let mut q = Pose::new(0.0, 0.0, 0.0);
        let mut t = 0.0;
        while t + dt <= total {
            q = step(q, twist, dt).unwrap();
            t += dt;
        }
        q = step(q, twist, total - t).unwrap();
        assert!(q.x.hypot(q.y) < 0.01, "end at {q:?}");
        assert!((q.x - fine.x).hypot(q.y - fine.y) < 0.01);
    }

    #[test]
    fn sensor_identity_and_statistics() {
        let p = Pose::new(1.0, -2.0, 0.4);
        let cfg = DisturbanceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sense(&p, &cfg, &mut rng), p);

        let cfg = DisturbanceConfig {
            sensor_sigma_pos: 0.05,
            sensor_sigma_theta: 0.1,
            rng_seed: 11,
            ..Default::default()
        };
        let origin = Pose::new(0.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let n = 100_000;
        let (mut sx, mut sxx, mut st) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let m = sense(&origin, &cfg, &mut rng);
            sx += m.x;
            sxx += m.x * m.x;
            st += m.theta * m.theta;
        }
        let mean = sx / n as f64;
        let std = (sxx / n as f64 - mean * mean).sqrt();
        assert!((std / 0.05 - 1.0).abs() < 0.03, "std {std}");
        assert!(((st / n as f64).sqrt() / 0.1 - 1.0).abs() < 0.03);

        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            assert_eq!(sense(&p, &cfg, &mut a), sense(&p, &cfg, &mut b));
        }
    }

    proptest! {
        #[test]
        fn wheels_round_trip(v in -3.0f64..3.0, w in -5.0f64..5.0, l in 0.05f64..1.0) {
            let t = wheels_to_twist(twist_to_wheels(Twist::new(v, w), l).unwrap());
            prop_assert!((t.v - v).abs() <= 1e-12);
            prop_assert!((t.omega - w).abs() <= 1e-12);
        }

        #[test]
        fn saturation_never_grows_and_keeps_ratio(
            v in -3.0f64..3.0, w in -5.0f64..5.0, m in 0.1f64..2.0
        ) {
            let s = saturate(Twist::new(v, w), m);
            prop_assert!(s.v.abs() <= v.abs());
            prop_assert!(s.omega.abs() <= w.abs());
            prop_assert!(s.omega.abs() <= m);
            if v != 0.0 && w.abs() > m {
                prop_assert!((s.omega / s.v - w / v).abs() <= 1e-9 * (w / v).abs().max(1.0));
            }
        }

        #[test]
        fn step_moves_at_most_speed_times_dt(
            x in -5.0f64..5.0, y in -5.0f64..5.0, th in -3.0f64..3.0,
            v in -2.0f64..2.0, w in -2.0f64..2.0, dt in 0.001f64..0.2
        ) {
            let p = Pose::new(x, y, th);
            let q = step(p, Twist::new(v, w), dt).unwrap();
            prop_assert!((q.x - p.x).hypot(q.y - p.y) <= v.abs() * dt + 1e-12);
            prop_assert!(wrap_angle(q.theta - p.theta).abs() <= w.abs() * dt + 1e-12);
            let straight = step(p, Twist::new(v, 0.0), dt).unwrap();
            prop_assert_eq!(straight.theta, p.theta);
            let spin = step(p, Twist::new(0.0, w), dt).unwrap();
            prop_assert_eq!((spin.x, spin.y), (p.x, p.y));
        }
    }
}
