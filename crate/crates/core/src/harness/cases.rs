//! Closed-loop scenario runners.

use nalgebra::{Point2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ReferenceSpec, ScenarioConfig, WallFollowSpec};
use super::metrics::{compute_metrics, true_errors, GroundTruth, Metrics, StepRecord, TrueError};
use super::room::{raycast_lidar, PolylineSet, RoomSpec};
use super::HarnessError;
use crate::controller::{ControlBreakdown, Controller};
use crate::spline::{fit_wall, offset_trajectory, SplineError, Trajectory};
use crate::vehicle::{
    apply_disturbance, sense, step_with_substeps, twist_to_wheels, wheels_to_twist, Pose, Twist,
};

/// Sample spacing of the ground-truth wall contour (m).
const CONTOUR_SPACING: f64 = 0.005;
/// Scan points farther apart than this belong to different obstacles (m).
const SEGMENT_GAP: f64 = 0.5;
/// Half-width of the forward cone checked during exploration (rad).
const EXPLORE_CONE: f64 = 0.1;
/// Most smoothing passes applied to a wall chain whose offset folds.
const MAX_SMOOTHING: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// LQR + feedforward + spiking compensator.
    Snn,
    /// LQR + feedforward benchmark.
    Lqr,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Snn => "snn",
            ControllerKind::Lqr => "lqr",
        }
    }
}

/// Spikes of both populations, as `(time, neuron)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpikeRaster {
    pub velocity: Vec<(f64, usize)>,
    pub angular: Vec<(f64, usize)>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub kind: ControllerKind,
    pub records: Vec<StepRecord>,
    pub true_errors: Vec<TrueError>,
    pub metrics: Metrics,
    /// Time of the first collision, if any. The run stops there.
    pub collision: Option<f64>,
    /// Start of wall following (wall-following runs only).
    pub follow_start: Option<f64>,
    /// Periods in which the refitted wall could not be offset and the previous
    /// trajectory was reused.
    pub refit_failures: usize,
    pub spikes: Option<SpikeRaster>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub snn: RunOutput,
    pub lqr: RunOutput,
}

impl Comparison {
    pub fn runs(&self) -> [&RunOutput; 2] {
        [&self.snn, &self.lqr]
    }
}

/// Samples a line or sinusoid reference.
pub fn build_trajectory(spec: &ReferenceSpec) -> Result<Trajectory, HarnessError> {
    let traj = match *spec {
        ReferenceSpec::Line { y, x0, x1, samples } => Trajectory::from_parametric(x0, x1, samples, |s| {
            (Point2::new(s, y), Vector2::new(1.0, 0.0), Vector2::zeros())
        })?,
        ReferenceSpec::Sinusoid {
            amplitude: a,
            frequency: f,
            x0,
            x1,
            samples,
        } => Trajectory::from_parametric(x0, x1, samples, |s| {
            let (sin, cos) = (f * s).sin_cos();
            (
                Point2::new(s, a * sin),
                Vector2::new(1.0, a * f * cos),
                Vector2::new(0.0, -a * f * f * sin),
            )
        })?,
        ReferenceSpec::Room(_) => return Err(HarnessError::WrongReference("line or sinusoid")),
    };
    Ok(traj)
}

struct Loop {
    ctrl: Controller,
    rng: ChaCha8Rng,
    pose: Pose,
    records: Vec<StepRecord>,
}

impl Loop {
    fn new(cfg: &ScenarioConfig, kind: ControllerKind) -> Result<Self, HarnessError> {
        let snn = (kind == ControllerKind::Snn).then_some(&cfg.snn);
        let mut ctrl = Controller::new(cfg.controller, snn)?;
        if cfg.output.dump_spikes {
            if let Some(s) = ctrl.snn_mut() {
                s.record_spikes(true);
            }
        }
        Ok(Self {
            ctrl,
            rng: ChaCha8Rng::seed_from_u64(cfg.disturbance.rng_seed),
            pose: Pose::new(cfg.start.x, cfg.start.y, cfg.start.theta),
            records: Vec::with_capacity(cfg.steps()),
        })
    }

    fn measure(&mut self, cfg: &ScenarioConfig) -> Pose {
        sense(&self.pose, &cfg.disturbance, &mut self.rng)
    }

    /// Logs the period and advances the plant with the faulty actuators.
    fn actuate(
        &mut self,
        cfg: &ScenarioConfig,
        t: f64,
        measured: Pose,
        match_index: usize,
        (e_p, e_theta): (f64, f64),
        c: &ControlBreakdown,
    ) -> Result<(), HarnessError> {
        self.records.push(StepRecord {
            t,
            true_pose: self.pose,
            measured,
            match_index,
            e_p,
            e_theta,
            u_l: c.u_l,
            u_f: c.u_f,
            u_a: c.u_a,
            u_total: c.u_total,
        });
        let delivered = apply_disturbance(c.u_total, &cfg.disturbance);
        let wheels = twist_to_wheels(delivered, cfg.plant.track_width)?;
        self.pose = step_with_substeps(
            self.pose,
            wheels_to_twist(wheels),
            cfg.controller.dt,
            cfg.plant.substeps,
        )?;
        Ok(())
    }

    fn finish(
        mut self,
        kind: ControllerKind,
        truth: &dyn GroundTruth,
        mae_from: f64,
        cfg: &ScenarioConfig,
    ) -> RunOutput {
        let spikes = cfg.output.dump_spikes.then(|| {
            let snn = self.ctrl.snn_mut();
            snn.map(|s| SpikeRaster {
                velocity: s.velocity.take_raster(),
                angular: s.angular.take_raster(),
            })
            .unwrap_or_default()
        });
        let thresholds = (cfg.metrics.e_p_threshold, cfg.metrics.e_theta_threshold);
        let errs = true_errors(&self.records, truth);
        let metrics = super::metrics::metrics_from_errors(&self.records, &errs, mae_from, thresholds);
        RunOutput {
            kind,
            records: std::mem::take(&mut self.records),
            true_errors: errs,
            metrics,
            collision: None,
            follow_start: None,
            refit_failures: 0,
            spikes,
        }
    }
}

/// Tracks a fixed line or sinusoid reference with one controller.
pub fn run_tracking(cfg: &ScenarioConfig, kind: ControllerKind) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let traj = build_trajectory(&cfg.reference)?;
    let dt = cfg.controller.dt;
    let mut lp = Loop::new(cfg, kind)?;
    for k in 0..cfg.steps() {
        let t = k as f64 * dt;
        let measured = lp.measure(cfg);
        let out = lp.ctrl.control_step(&measured, &traj)?;
        let errs = (out.errors.e_p, out.errors.e_theta);
        lp.actuate(cfg, t, measured, out.matched.index, errs, &out.control)?;
    }
    Ok(lp.finish(kind, &traj, 0.0, cfg))
}

fn compare(
    run: impl Fn(ControllerKind) -> Result<RunOutput, HarnessError>,
) -> Result<Comparison, HarnessError> {
    Ok(Comparison {
        snn: run(ControllerKind::Snn)?,
        lqr: run(ControllerKind::Lqr)?,
    })
}

/// Straight-line tracking with an angular actuator fault.
pub fn run_case_a(cfg: &ScenarioConfig) -> Result<Comparison, HarnessError> {
    if !matches!(cfg.reference, ReferenceSpec::Line { .. }) {
        return Err(HarnessError::WrongReference("line"));
    }
    compare(|k| run_tracking(cfg, k))
}

/// Sinusoid tracking with noisy pose feedback.
pub fn run_case_b(cfg: &ScenarioConfig) -> Result<Comparison, HarnessError> {
    if !matches!(cfg.reference, ReferenceSpec::Sinusoid { .. }) {
        return Err(HarnessError::WrongReference("sinusoid"));
    }
    compare(|k| run_tracking(cfg, k))
}

/// Wall following in a lidar-scanned room.
pub fn run_case_c(cfg: &ScenarioConfig, room: &RoomSpec) -> Result<Comparison, HarnessError> {
    compare(|k| run_wall_follow(cfg, room, k))
}

/// Resamples an ordered point chain at uniform arc-length spacing.
pub fn resample_chain(points: &[Point2<f64>], spacing: f64) -> Vec<Point2<f64>> {
    let Some(&first) = points.first() else {
        return Vec::new();
    };
    let mut out = vec![first];
    let mut carried = 0.0;
    for w in points.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        let mut at = spacing - carried;
        while at <= len {
            out.push(w[0] + seg * (at / len));
            at += spacing;
        }
        carried = len - (at - spacing);
    }
    let last = *points.last().unwrap();
    if carried > 0.25 * spacing {
        out.push(last);
    }
    out
}

/// Splits scan points wherever consecutive points are farther apart than
/// `gap` and returns the piece holding the point nearest to `origin`.
pub fn nearest_segment<'a>(points: &'a [Point2<f64>], origin: &Point2<f64>, gap: f64) -> &'a [Point2<f64>] {
    let Some(nearest) = (0..points.len())
        .min_by(|&a, &b| (points[a] - origin).norm().total_cmp(&(points[b] - origin).norm()))
    else {
        return points;
    };
    let mut lo = nearest;
    while lo > 0 && (points[lo] - points[lo - 1]).norm() <= gap {
        lo -= 1;
    }
    let mut hi = nearest + 1;
    while hi < points.len() && (points[hi] - points[hi - 1]).norm() <= gap {
        hi += 1;
    }
    &points[lo..hi]
}

/// Fits and offsets the wall seen in the fit window of a scan.
///
/// Only the contiguous piece of wall nearest to the vehicle is used. When the
/// offset folds at a sharp corner, or is sharper than `max_curvature`, the
/// fit is retried on smoothed control points with the number of passes
/// doubled each time.
fn wall_trajectory(
    spec: &WallFollowSpec,
    room: &RoomSpec,
    true_pose: &Pose,
    measured: &Pose,
) -> Result<Trajectory, HarnessError> {
    let scan = raycast_lidar(room, true_pose)?;
    let origin = measured.position();
    let pts: Vec<Point2<f64>> = scan
        .iter()
        .filter(|r| r.range <= spec.fit_range)
        .filter(|r| (spec.fit_window[0]..=spec.fit_window[1]).contains(&r.bearing))
        .map(|r| {
            let (s, c) = (measured.theta + r.bearing).sin_cos();
            origin + Vector2::new(c, s) * r.range
        })
        .collect();
    let wall = nearest_segment(&pts, &origin, SEGMENT_GAP);
    let mut control = cut_pockets(&resample_chain(wall, spec.point_spacing), 2.0 * spec.offset);
    let mut passes = 0;
    loop {
        let result = fit_wall(&control, spec.degree)
            .and_then(|curve| offset_trajectory(&curve, spec.offset, spec.samples, spec.side));
        let too_sharp = match &result {
            Ok(traj) => traj.points().iter().any(|p| p.curvature.abs() > spec.max_curvature),
            Err(SplineError::SelfIntersectingOffset { .. }) => true,
            Err(_) => false,
        };
        let give_up = !too_sharp || passes >= MAX_SMOOTHING;
        match result {
            Ok(traj) if give_up => return Ok(traj),
            Err(e) if give_up => return Err(e.into()),
            _ => {
                let more = passes.max(1);
                for _ in 0..more {
                    smooth_chain(&mut control);
                }
                passes += more;
            }
        }
    }
}

/// Removes detours into pockets narrower than `width`: whenever the chain
/// returns within `width` of an earlier point along a path more than twice as
/// long as the gap (a wedge sharper than 60 degrees), the detour is dropped.
pub fn cut_pockets(points: &[Point2<f64>], width: f64) -> Vec<Point2<f64>> {
    let mut arc = vec![0.0; points.len()];
    for i in 1..points.len() {
        arc[i] = arc[i - 1] + (points[i] - points[i - 1]).norm();
    }
    let mut out = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        out.push(points[i]);
        let exit = (i + 2..points.len()).rev().find(|&j| {
            let gap = (points[j] - points[i]).norm();
            gap < width && arc[j] - arc[i] > 2.0 * gap
        });
        i = exit.unwrap_or(i + 1);
    }
    out
}

/// One pass of `[1, 2, 1] / 4` smoothing with fixed end points. Rounds sharp
/// corners of the wall chain so the offset curve does not fold.
pub fn smooth_chain(points: &mut [Point2<f64>]) {
    if points.len() < 3 {
        return;
    }
    let orig = points.to_vec();
    for i in 1..points.len() - 1 {
        points[i] = Point2::from((orig[i - 1].coords + orig[i].coords * 2.0 + orig[i + 1].coords) / 4.0);
    }
}

/// Ground-truth contour for a wall-following scenario.
pub fn wall_contour(room: &RoomSpec, spec: &WallFollowSpec) -> PolylineSet {
    PolylineSet::new(room.offset_contour(spec.offset, CONTOUR_SPACING))
}

/// Explores straight ahead until an obstacle is close, then follows the wall,
/// refitting the reference from a fresh scan every period.
pub fn run_wall_follow(
    cfg: &ScenarioConfig,
    room: &RoomSpec,
    kind: ControllerKind,
) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let ReferenceSpec::Room(spec) = &cfg.reference else {
        return Err(HarnessError::WrongReference("room"));
    };
    room.validate()?;
    let dt = cfg.controller.dt;
    let mut lp = Loop::new(cfg, kind)?;
    let mut traj: Option<Trajectory> = None;
    let mut follow_start = None;
    let mut refit_failures = 0;
    let mut collision = None;

    for k in 0..cfg.steps() {
        let t = k as f64 * dt;
        if room.clearance(&lp.pose.position()) < cfg.plant.robot_radius {
            collision = Some(t);
            break;
        }
        let measured = lp.measure(cfg);
        if follow_start.is_none() {
            let scan = raycast_lidar(room, &lp.pose)?;
            let ahead = scan
                .iter()
                .filter(|r| r.bearing.abs() <= EXPLORE_CONE)
                .map(|r| r.range)
                .fold(f64::INFINITY, f64::min);
            if ahead <= spec.explore_stop_range {
                follow_start = Some(t);
            } else {
                let u = Twist::new(cfg.controller.v_ref, 0.0);
                let c = ControlBreakdown {
                    u_l: Twist::ZERO,
                    u_f: u,
                    u_a: Twist::ZERO,
                    u_total: u,
                };
                lp.actuate(cfg, t, measured, 0, (f64::NAN, f64::NAN), &c)?;
                continue;
            }
        }
        match wall_trajectory(spec, room, &lp.pose, &measured) {
            Ok(fresh) => {
                traj = Some(fresh);
                lp.ctrl.reset_matcher();
            }
            Err(HarnessError::OutsideRoom { .. }) => unreachable!("pose checked above"),
            Err(_) => refit_failures += 1,
        }
        let current = traj.as_ref().ok_or(HarnessError::NoTrajectory(t))?;
        let out = lp.ctrl.control_step(&measured, current)?;
        let errs = (out.errors.e_p, out.errors.e_theta);
        lp.actuate(cfg, t, measured, out.matched.index, errs, &out.control)?;
    }

    let contour = wall_contour(room, spec);
    let mae_from = follow_start.map_or(f64::INFINITY, |t0| t0 + spec.metrics_warmup);
    let mut out = lp.finish(kind, &contour, mae_from, cfg);
    out.collision = collision;
    out.follow_start = follow_start;
    out.refit_failures = refit_failures;
    Ok(out)
}

/// Runs one controller on any scenario, loading the room when needed.
pub fn run_scenario(cfg: &ScenarioConfig, kind: ControllerKind) -> Result<RunOutput, HarnessError> {
    match &cfg.reference {
        ReferenceSpec::Room(spec) => {
            let room = RoomSpec::load(&spec.room)?;
            run_wall_follow(cfg, &room, kind)
        }
        _ => run_tracking(cfg, kind),
    }
}

/// Scores an existing log against a line or sinusoid reference.
pub fn score_tracking(cfg: &ScenarioConfig, records: &[StepRecord]) -> Result<Metrics, HarnessError> {
    let traj = build_trajectory(&cfg.reference)?;
    Ok(compute_metrics(
        records,
        &traj,
        0.0,
        (cfg.metrics.e_p_threshold, cfg.metrics.e_theta_threshold),
    ))
}
