//! Matching point finder and curvature feedforward.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spline::Trajectory;
use crate::vehicle::{Pose, Twist};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub index: usize,
    pub ref_pose: Pose,
    /// Signed curvature at the matched sample.
    pub ref_curvature: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardConfig {
    /// Constant tracking speed (m/s).
    pub v_ref: f64,
    /// Curvature feedforward coefficient.
    pub alpha: f64,
    /// Number of samples searched ahead of the previous match.
    pub search_window: usize,
}

impl Default for FeedforwardConfig {
    fn default() -> Self {
        Self {
            v_ref: 1.0,
            alpha: 0.06,
            search_window: 50,
        }
    }
}

/// Nearest trajectory sample to `pos`.
///
/// With `prev` the search covers `prev..=prev + window` only, so the match
/// never moves backwards. Ties go to the smaller index.
pub fn find_match(
    traj: &Trajectory,
    pos: &Point2<f64>,
    prev: Option<usize>,
    window: usize,
) -> Result<MatchResult, MatchError> {
    let points = traj.points();
    if points.is_empty() {
        return Err(MatchError::EmptyTrajectory);
    }
    let last = points.len() - 1;
    let (lo, hi) = match prev {
        Some(p) => {
            let lo = p.min(last);
            (lo, lo.saturating_add(window).min(last))
        }
        None => (0, last),
    };
    let mut best = lo;
    let mut best_d2 = f64::INFINITY;
    for (i, tp) in points[lo..=hi].iter().enumerate() {
        let d2 = (tp.position - pos).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = lo + i;
        }
    }
    let tp = &points[best];
    Ok(MatchResult {
        index: best,
        ref_pose: Pose::new(tp.position.x, tp.position.y, tp.heading),
        ref_curvature: tp.curvature,
        distance: best_d2.sqrt(),
    })
}

/// `u_f = (v_r, alpha * kappa)`, with the curvature sign giving the turn direction.
pub fn feedforward(m: &MatchResult, cfg: &FeedforwardConfig) -> Twist {
    Twist::new(cfg.v_ref, cfg.alpha * m.ref_curvature)
}

/// Matcher that remembers the previous index of one vehicle.
#[derive(Debug, Clone, Default)]
pub struct Matcher {
    prev: Option<usize>,
    window: usize,
}

impl Matcher {
    pub fn new(window: usize) -> Self {
        Self {
            prev: None,
            window: window.max(1),
        }
    }

    /// Forget the previous match, e.g. after the trajectory was regenerated.
    pub fn reset(&mut self) {
        self.prev = None;
    }

    pub fn previous(&self) -> Option<usize> {
        self.prev
    }

    pub fn find(&mut self, traj: &Trajectory, pos: &Point2<f64>) -> Result<MatchResult, MatchError> {
        let m = find_match(traj, pos, self.prev, self.window)?;
        self.prev = Some(m.index);
        Ok(m)
    }
}
