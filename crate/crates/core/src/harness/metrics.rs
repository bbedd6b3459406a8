//! Run logs and error metrics against ground truth.

use nalgebra::Point2;

use super::room::PolylineSet;
use crate::spline::Trajectory;
use crate::vehicle::{wrap_angle, Pose, Twist};

/// One controller period of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub true_pose: Pose,
    pub measured: Pose,
    pub match_index: usize,
    pub e_p: f64,
    pub e_theta: f64,
    pub u_l: Twist,
    pub u_f: Twist,
    pub u_a: Twist,
    pub u_total: Twist,
}

/// Ground truth a run is scored against.
pub trait GroundTruth {
    /// Distance from `p` to the reference path.
    fn cross_track(&self, p: &Point2<f64>) -> f64;

    /// Heading error of `pose` relative to the closest reference point, when
    /// the reference defines a direction.
    fn heading_error(&self, pose: &Pose) -> Option<f64>;
}

impl GroundTruth for Trajectory {
    fn cross_track(&self, p: &Point2<f64>) -> f64 {
        let pts = self.points();
        let mut best = f64::INFINITY;
        for w in pts.windows(2) {
            let (a, b) = (w[0].position, w[1].position);
            let ab = b - a;
            let len_sq = ab.norm_squared();
            let t = if len_sq > 0.0 {
                ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            best = best.min((p - (a + ab * t)).norm());
        }
        best
    }

    fn heading_error(&self, pose: &Pose) -> Option<f64> {
        let p = pose.position();
        let nearest = self.points().iter().min_by(|a, b| {
            (a.position - p)
                .norm_squared()
                .total_cmp(&(b.position - p).norm_squared())
        })?;
        Some(wrap_angle(pose.theta - nearest.heading))
    }
}

impl GroundTruth for PolylineSet {
    fn cross_track(&self, p: &Point2<f64>) -> f64 {
        self.distance(p)
    }

    fn heading_error(&self, _pose: &Pose) -> Option<f64> {
        None
    }
}

/// Ground-truth errors of one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueError {
    pub t: f64,
    pub e_p: f64,
    pub e_theta: Option<f64>,
}

pub fn true_errors(records: &[StepRecord], truth: &dyn GroundTruth) -> Vec<TrueError> {
    records
        .iter()
        .map(|r| TrueError {
            t: r.t,
            e_p: truth.cross_track(&r.true_pose.position()),
            e_theta: truth.heading_error(&r.true_pose),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean absolute cross-track error over the scored window (m).
    pub mae: f64,
    /// Earliest time after which both errors stay below their thresholds.
    pub convergence_time: Option<f64>,
    /// Distance driven over the whole run (m).
    pub path_length: f64,
    pub final_e_p: f64,
    pub final_e_theta: Option<f64>,
    /// Records inside the scored window.
    pub samples: usize,
}

/// Scores a run. The MAE covers records with `t >= mae_from`; convergence is
/// judged over the whole run.
pub fn compute_metrics(
    records: &[StepRecord],
    truth: &dyn GroundTruth,
    mae_from: f64,
    thresholds: (f64, f64),
) -> Metrics {
    let errs = true_errors(records, truth);
    metrics_from_errors(records, &errs, mae_from, thresholds)
}

pub fn metrics_from_errors(
    records: &[StepRecord],
    errs: &[TrueError],
    mae_from: f64,
    (ep_max, eth_max): (f64, f64),
) -> Metrics {
    let scored: Vec<f64> = errs
        .iter()
        .filter(|e| e.t >= mae_from)
        .map(|e| e.e_p.abs())
        .collect();
    let mae = if scored.is_empty() {
        f64::NAN
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };

    let within = |e: &TrueError| e.e_p < ep_max && e.e_theta.is_none_or(|th| th.abs() < eth_max);
    let convergence_time = match errs.iter().rposition(|e| !within(e)) {
        None => errs.first().map(|e| e.t),
        Some(i) => errs.get(i + 1).map(|e| e.t),
    };

    let path_length = records
        .windows(2)
        .map(|w| (w[1].true_pose.position() - w[0].true_pose.position()).norm())
        .sum();
    let last = errs.last();
    Metrics {
        mae,
        convergence_time,
        path_length,
        final_e_p: last.map_or(f64::NAN, |e| e.e_p),
        final_e_theta: last.and_then(|e| e.e_theta),
        samples: scored.len(),
    }
}

/// Mean and population standard deviation of `f` over records with `t` in `[t0, t1]`.
pub fn window_stats<T>(items: &[T], t0: f64, t1: f64, time: impl Fn(&T) -> f64, f: impl Fn(&T) -> f64) -> (f64, f64) {
    let vals: Vec<f64> = items
        .iter()
        .filter(|it| (t0..=t1).contains(&time(it)))
        .map(f)
        .collect();
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
