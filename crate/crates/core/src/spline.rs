//! Quasi-uniform B-spline wall model and offset reference trajectories.
//!
//! Sensed wall points are used directly as control points of a clamped
//! B-spline. The curve is then offset sideways by the desired wall distance
//! and sampled densely into a [`Trajectory`] for the matcher.

use std::io::Read;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default B-spline degree (cubic keeps curvature continuous).
pub const DEFAULT_DEGREE: usize = 3;

/// Default number of trajectory samples per unit curve parameter.
pub const DEFAULT_SAMPLES: usize = 500;

/// Squared tangent speed below which the tangent is treated as degenerate.
pub const DEGENERATE_SPEED_SQ: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("degree {degree} needs at least {needed} points, got {got}")]
    TooFewPoints {
        got: usize,
        needed: usize,
        degree: usize,
    },
    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),
    #[error("curve parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("derivatives need degree >= 1")]
    DegreeTooLow,
    #[error("offset distance must be finite and non-negative, got {0}")]
    InvalidOffset(f64),
    #[error("offset of {offset} m folds the curve near t = {t} (curvature {curvature})")]
    SelfIntersectingOffset { offset: f64, t: f64, curvature: f64 },
    #[error("trajectory needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("trajectory parameters must be strictly increasing (index {0})")]
    NonIncreasingParameter(usize),
    #[error("point cloud csv: {0}")]
    Csv(String),
}

/// Side of the vehicle the wall is on, looking along the direction of travel.
///
/// The offset trajectory is placed on the opposite side of the fitted wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WallSide {
    #[default]
    Right,
    Left,
}

impl WallSide {
    /// Signed offset along the left normal of the travel direction.
    fn signed_offset(self, d: f64) -> f64 {
        match self {
            WallSide::Right => d,
            WallSide::Left => -d,
        }
    }
}

/// Clamped quasi-uniform knot vector for `n_points` control points.
///
/// The first and last `degree + 1` knots are 0 and 1; interior knots are
/// uniformly spaced with span `1 / (n - degree + 1)`, where `n = n_points - 1`.
pub fn make_knots(n_points: usize, degree: usize) -> Result<Vec<f64>, SplineError> {
    if n_points <= degree {
        return Err(SplineError::TooFewPoints {
            got: n_points,
            needed: degree + 1,
            degree,
        });
    }
    let n = n_points - 1;
    let spans = n - degree + 1;
    let mut knots = Vec::with_capacity(n_points + degree + 1);
    knots.extend(std::iter::repeat_n(0.0, degree + 1));
    knots.extend((1..spans).map(|j| j as f64 / spans as f64));
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    Ok(knots)
}

/// Cox-de Boor basis function `N_{i,k}(t)`.
///
/// Terms with a zero knot span are taken as zero. At the end of the knot
/// vector the last non-empty span is treated as closed so that the clamped
/// curve is defined at `t = t_max`.
pub fn basis(i: usize, k: usize, t: f64, knots: &[f64]) -> f64 {
    if i + k + 1 >= knots.len() {
        return 0.0;
    }
    if k == 0 {
        let (lo, hi) = (knots[i], knots[i + 1]);
        if lo <= t && t < hi {
            return 1.0;
        }
        let last = *knots.last().unwrap_or(&0.0);
        // closed last span
        if t == last && hi == last && lo < hi {
            return 1.0;
        }
        return 0.0;
    }
    let left_den = knots[i + k] - knots[i];
    let right_den = knots[i + k + 1] - knots[i + 1];
    let left = if left_den > 0.0 {
        (t - knots[i]) / left_den * basis(i, k - 1, t, knots)
    } else {
        0.0
    };
    let right = if right_den > 0.0 {
        (knots[i + k + 1] - t) / right_den * basis(i + 1, k - 1, t, knots)
    } else {
        0.0
    };
    left + right
}

/// A clamped B-spline curve in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCurve {
    degree: usize,
    control_points: Vec<Point2<f64>>,
    knots: Vec<f64>,
}

impl SplineCurve {
    /// Builds a curve with the quasi-uniform knot vector for these points.
    pub fn new(control_points: Vec<Point2<f64>>, degree: usize) -> Result<Self, SplineError> {
        let knots = make_knots(control_points.len(), degree)?;
        Ok(Self {
            degree,
            control_points,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn control_points(&self) -> &[Point2<f64>] {
        &self.control_points
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index `s` of the knot span with `knots[s] <= t < knots[s + 1]`,
    /// restricted to `degree..=n`.
    fn find_span(&self, t: f64) -> usize {
        let n = self.control_points.len() - 1;
        if t >= self.knots[n + 1] {
            return n;
        }
        // upper_bound over the active region
        let (mut lo, mut hi) = (self.degree, n + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// The `degree + 1` non-vanishing basis values on `span`.
    fn basis_on_span(&self, span: usize, t: f64) -> Vec<f64> {
        let k = self.degree;
        let mut values = vec![0.0; k + 1];
        let mut left = vec![0.0; k + 1];
        let mut right = vec![0.0; k + 1];
        values[0] = 1.0;
        for j in 1..=k {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let den = right[r + 1] + left[j - r];
                let temp = if den != 0.0 { values[r] / den } else { 0.0 };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        values
    }

    fn eval_unchecked(&self, t: f64) -> Point2<f64> {
        let span = self.find_span(t);
        let values = self.basis_on_span(span, t);
        let base = span - self.degree;
        let mut acc = Vector2::zeros();
        for (j, w) in values.iter().enumerate() {
            acc += self.control_points[base + j].coords * *w;
        }
        Point2::from(acc)
    }

    /// Hodograph: the derivative curve, one degree lower.
    fn derivative_curve(&self) -> Option<SplineCurve> {
        if self.degree == 0 {
            return None;
        }
        let k = self.degree;
        let pts: Vec<Point2<f64>> = self
            .control_points
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let den = self.knots[i + k + 1] - self.knots[i + 1];
                if den > 0.0 {
                    Point2::from((w[1] - w[0]) * (k as f64 / den))
                } else {
                    Point2::origin()
                }
            })
            .collect();
        Some(SplineCurve {
            degree: k - 1,
            control_points: pts,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
        })
    }
}

fn check_parameter(t: f64) -> Result<(), SplineError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(SplineError::ParameterOutOfRange(t))
    }
}

/// Position on the curve at parameter `t`.
pub fn eval(curve: &SplineCurve, t: f64) -> Result<Point2<f64>, SplineError> {
    check_parameter(t)?;
    Ok(curve.eval_unchecked(t))
}

/// Precomputed first and second derivative curves, for repeated evaluation.
struct Hodographs {
    first: SplineCurve,
    second: Option<SplineCurve>,
}

impl Hodographs {
    fn new(curve: &SplineCurve) -> Result<Self, SplineError> {
        let first = curve.derivative_curve().ok_or(SplineError::DegreeTooLow)?;
        let second = first.derivative_curve();
        Ok(Self { first, second })
    }

    fn eval(&self, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        let d1 = self.first.eval_unchecked(t).coords;
        let d2 = self
            .second
            .as_ref()
            .map(|c| c.eval_unchecked(t).coords)
            .unwrap_or_else(Vector2::zeros);
        (d1, d2)
    }
}

/// First and second derivatives of the curve with respect to `t`.
pub fn eval_derivatives(
    curve: &SplineCurve,
    t: f64,
) -> Result<(Vector2<f64>, Vector2<f64>), SplineError> {
    check_parameter(t)?;
    Ok(Hodographs::new(curve)?.eval(t))
}

/// Unsigned curvature `|x'y'' - x''y'| / (x'^2 + y'^2)^(3/2)`.
///
/// Returns 0 for a degenerate tangent.
pub fn curvature(d1: Vector2<f64>, d2: Vector2<f64>) -> f64 {
    signed_curvature(d1, d2).abs()
}

/// Curvature carrying the turn direction: positive for left (counter-clockwise) turns.
pub fn signed_curvature(d1: Vector2<f64>, d2: Vector2<f64>) -> f64 {
    let speed_sq = d1.norm_squared();
    if speed_sq < DEGENERATE_SPEED_SQ {
        return 0.0;
    }
    (d1.x * d2.y - d2.x * d1.y) / (speed_sq * speed_sq.sqrt())
}

/// Fits the wall model: the ordered sensed points become the control points.
pub fn fit_wall(points: &[Point2<f64>], degree: usize) -> Result<SplineCurve, SplineError> {
    if let Some(bad) = points
        .iter()
        .position(|p| !(p.x.is_finite() && p.y.is_finite()))
    {
        return Err(SplineError::NonFinite(bad));
    }
    SplineCurve::new(points.to_vec(), degree)
}

/// A sample of a reference path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    /// Curve parameter of the sample.
    pub s: f64,
    pub position: Point2<f64>,
    /// Tangent direction (rad).
    pub heading: f64,
    /// Signed curvature (1/m), positive when the path turns left.
    pub curvature: f64,
}

/// Densely sampled reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Result<Self, SplineError> {
        if points.len() < 2 {
            return Err(SplineError::TooFewSamples(points.len()));
        }
        if let Some(i) = points.windows(2).position(|w| !(w[1].s > w[0].s)) {
            return Err(SplineError::NonIncreasingParameter(i + 1));
        }
        Ok(Self { points })
    }

    /// Samples a parametric curve given position, first and second derivative
    /// at each parameter value in `[s0, s1]`.
    pub fn from_parametric<F>(s0: f64, s1: f64, samples: usize, f: F) -> Result<Self, SplineError>
    where
        F: Fn(f64) -> (Point2<f64>, Vector2<f64>, Vector2<f64>),
    {
        if samples < 2 {
            return Err(SplineError::TooFewSamples(samples));
        }
        let step = (s1 - s0) / (samples - 1) as f64;
        let points = (0..samples)
            .map(|j| {
                let s = if j + 1 == samples { s1 } else { s0 + step * j as f64 };
                let (position, d1, d2) = f(s);
                TrajectoryPoint {
                    s,
                    position,
                    heading: d1.y.atan2(d1.x),
                    curvature: signed_curvature(d1, d2),
                }
            })
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline length of the samples.
    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }
}

/// Samples the curve uniformly in `t` and shifts every sample by `d` along the
/// normal pointing away from the wall.
///
/// Curvature is that of the offset curve, `kappa / (1 - delta * kappa)`, where
/// `delta` is the offset signed along the left normal.
pub fn offset_trajectory(
    curve: &SplineCurve,
    d: f64,
    samples: usize,
    side: WallSide,
) -> Result<Trajectory, SplineError> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(SplineError::InvalidOffset(d));
    }
    if samples < 2 {
        return Err(SplineError::TooFewSamples(samples));
    }
    let hodo = Hodographs::new(curve)?;
    let delta = side.signed_offset(d);
    let last = (samples - 1) as f64;

    let mut raw = Vec::with_capacity(samples);
    for j in 0..samples {
        let t = j as f64 / last;
        let p = curve.eval_unchecked(t);
        let (d1, d2) = hodo.eval(t);
        let kappa = signed_curvature(d1, d2);
        if delta * kappa >= 1.0 {
            return Err(SplineError::SelfIntersectingOffset {
                offset: d,
                t,
                curvature: kappa,
            });
        }
        let tangent = (d1.norm_squared() >= DEGENERATE_SPEED_SQ).then(|| d1.normalize());
        raw.push((t, p, tangent, kappa));
    }

    // Degenerate tangents borrow the direction of the nearest valid sample.
    let fallback = raw
        .iter()
        .find_map(|r| r.2)
        .unwrap_or_else(|| Vector2::new(1.0, 0.0));
    let mut prev = fallback;
    let points = raw
        .into_iter()
        .map(|(t, p, tangent, kappa)| {
            let tangent = tangent.unwrap_or(prev);
            prev = tangent;
            let normal = Vector2::new(-tangent.y, tangent.x);
            TrajectoryPoint {
                s: t,
                position: p + normal * delta,
                heading: tangent.y.atan2(tangent.x),
                curvature: kappa / (1.0 - delta * kappa),
            }
        })
        .collect();
    Trajectory::new(points)
}

/// Reads an `x,y` point cloud. A non-numeric first row is treated as a header.
pub fn read_points_csv<R: Read>(reader: R) -> Result<Vec<Point2<f64>>, SplineError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| SplineError::Csv(e.to_string()))?;
        if record.len() != 2 {
            return Err(SplineError::Csv(format!(
                "row {}: expected 2 columns, got {}",
                row + 1,
                record.len()
            )));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(x), Ok(y)) => points.push(Point2::new(x, y)),
            _ if row == 0 => continue,
            _ => {
                return Err(SplineError::Csv(format!(
                    "row {}: cannot parse {:?}",
                    row + 1,
                    record
                )))
            }
        }
    }
    Ok(points)
}
