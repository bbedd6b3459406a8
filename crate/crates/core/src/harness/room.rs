//! Square room with cylindrical obstacles, a ray-cast lidar and the exact
//! wall-offset contour used as ground truth.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::vehicle::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Cylinder {
    fn center(&self) -> Point2<f64> {
        Point2::new(self.center[0], self.center[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarSpec {
    pub rays: usize,
    pub max_range: f64,
    /// Total angular span centred on the heading (rad).
    pub span: f64,
}

/// Axis-aligned square room centred on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub version: u32,
    pub side: f64,
    pub cylinders: Vec<Cylinder>,
    pub lidar: LidarSpec,
}

/// One lidar return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarReturn {
    /// Bearing relative to the vehicle heading (rad).
    pub bearing: f64,
    pub range: f64,
    pub point: Point2<f64>,
}

impl RoomSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let room: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        room.validate()?;
        Ok(room)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("room spec is always representable as TOML")
    }

    pub fn half(&self) -> f64 {
        self.side / 2.0
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if !(self.side > 0.0) {
            return fail("room side must be positive".into());
        }
        if self.lidar.rays == 0 || !(self.lidar.max_range > 0.0) || !(self.lidar.span > 0.0) {
            return fail("lidar needs rays, a positive range and a positive span".into());
        }
        let h = self.half();
        for (i, c) in self.cylinders.iter().enumerate() {
            if !(c.radius > 0.0) {
                return fail(format!("cylinder {i} has non-positive radius"));
            }
            let inside = c.center[0].abs() + c.radius <= h + 1e-9
                && c.center[1].abs() + c.radius <= h + 1e-9;
            if !inside {
                return fail(format!("cylinder {i} extends outside the room"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        let h = self.half();
        p.x.abs() < h
            && p.y.abs() < h
            && self
                .cylinders
                .iter()
                .all(|c| (p - c.center()).norm() > c.radius)
    }

    /// Distance from a free-space point to the nearest wall or cylinder surface.
    pub fn clearance(&self, p: &Point2<f64>) -> f64 {
        let h = self.half();
        let walls = (h - p.x.abs()).min(h - p.y.abs());
        self.cylinders
            .iter()
            .map(|c| (p - c.center()).norm() - c.radius)
            .fold(walls, f64::min)
    }

    /// Range along a unit direction to the first obstacle, if within `max_range`.
    pub fn cast(&self, origin: &Point2<f64>, dir: &Vector2<f64>, max_range: f64) -> Option<f64> {
        let h = self.half();
        let mut best = f64::INFINITY;
        // The origin is inside the square, so exactly one exit per axis.
        for (o, d) in [(origin.x, dir.x), (origin.y, dir.y)] {
            if d != 0.0 {
                let t = ((h.copysign(d)) - o) / d;
                if t >= 0.0 {
                    best = best.min(t);
                }
            }
        }
        for c in &self.cylinders {
            let m = origin - c.center();
            let b = m.dot(dir);
            let disc = b * b - (m.norm_squared() - c.radius * c.radius);
            if disc < 0.0 {
                continue;
            }
            let t = -b - disc.sqrt();
            if t >= 0.0 {
                best = best.min(t);
            }
        }
        (best <= max_range).then_some(best)
    }

    /// Exact offset contour at distance `d` from all obstacles, as polylines.
    ///
    /// Each wall contributes its parallel line and each cylinder a circle of
    /// radius `r + d`; only the pieces whose clearance is at least `d` belong
    /// to the contour. Pieces are sampled at `spacing` and split wherever a
    /// sample is covered by another obstacle.
    pub fn offset_contour(&self, d: f64, spacing: f64) -> Vec<Vec<Point2<f64>>> {
        let h = self.half() - d;
        let mut pieces = Vec::new();
        let mut push_samples = |samples: Vec<Point2<f64>>| {
            let mut run = Vec::new();
            for p in samples {
                if self.clearance(&p) >= d - 1e-9 {
                    run.push(p);
                } else if run.len() > 1 {
                    pieces.push(std::mem::take(&mut run));
                } else {
                    run.clear();
                }
            }
            if run.len() > 1 {
                pieces.push(run);
            }
        };
        if h > 0.0 {
            let n = ((2.0 * h / spacing).ceil() as usize).max(1);
            let along = |j: usize| -h + 2.0 * h * j as f64 / n as f64;
            let corners = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
            for (sx, sy) in corners {
                let samples = (0..=n)
                    .map(|j| {
                        if sx != 0.0 {
                            Point2::new(sx * h, along(j))
                        } else {
                            Point2::new(along(j), sy * h)
                        }
                    })
                    .collect();
                push_samples(samples);
            }
        }
        for c in &self.cylinders {
            let r = c.radius + d;
            let n = ((TAU * r / spacing).ceil() as usize).max(8);
            let samples = (0..=n)
                .map(|j| {
                    let a = TAU * j as f64 / n as f64 - PI;
                    c.center() + Vector2::new(a.cos(), a.sin()) * r
                })
                .collect();
            push_samples(samples);
        }
        pieces
    }
}

/// Simulated scan from `pose`, in increasing bearing order.
///
/// Bearings are spread uniformly over the lidar span, centred on the heading.
/// Rays without a return within range are omitted.
pub fn raycast_lidar(room: &RoomSpec, pose: &Pose) -> Result<Vec<LidarReturn>, HarnessError> {
    let origin = pose.position();
    if !room.contains(&origin) {
        return Err(HarnessError::OutsideRoom {
            x: pose.x,
            y: pose.y,
        });
    }
    let lidar = &room.lidar;
    let full_circle = lidar.span >= TAU - 1e-12;
    let n = lidar.rays;
    let step = if full_circle || n == 1 {
        lidar.span / n as f64
    } else {
        lidar.span / (n - 1) as f64
    };
    let first = if full_circle { -PI } else { -lidar.span / 2.0 };
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let bearing = first + step * j as f64;
        let (s, c) = (pose.theta + bearing).sin_cos();
        let dir = Vector2::new(c, s);
        if let Some(range) = room.cast(&origin, &dir, lidar.max_range) {
            out.push(LidarReturn {
                bearing,
                range,
                point: origin + dir * range,
            });
        }
    }
    Ok(out)
}

/// Exact distance from a point to a set of polylines.
#[derive(Debug, Clone)]
pub struct PolylineSet {
    pieces: Vec<Vec<Point2<f64>>>,
}

impl PolylineSet {
    pub fn new(pieces: Vec<Vec<Point2<f64>>>) -> Self {
        Self { pieces }
    }

    pub fn pieces(&self) -> &[Vec<Point2<f64>>] {
        &self.pieces
    }

    pub fn distance(&self, p: &Point2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for piece in &self.pieces {
            for w in piece.windows(2) {
                best = best.min(segment_distance(p, &w[0], &w[1]));
            }
        }
        best
    }
}

fn segment_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    let t = if len_sq > 0.0 {
        ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}
