//! Composite tracking controller `u = u_l + u_f + u_a`.
//!
//! One period runs: match the measured pose to the reference, linearize about
//! the matched point and solve for the LQR gain, add curvature feedforward, run
//! the spiking compensator with its learning update, then sum and saturate.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lqr::{self, LqrError, LqrGain, LqrWeights};
use crate::matcher::{feedforward, FeedforwardConfig, MatchError, MatchResult, Matcher};
use crate::snn::{AdaptiveSnn, SnnConfig, SnnError};
use crate::spline::Trajectory;
use crate::vehicle::{saturate, wrap_angle, Pose, Twist};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Lqr(#[from] LqrError),
    #[error(transparent)]
    Snn(#[from] SnnError),
    #[error("invalid controller configuration: {0}")]
    Config(String),
}

/// Tracking errors relative to the matched reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Errors {
    /// Euclidean distance to the matched point (m).
    pub e_p: f64,
    /// Wrapped heading error (rad).
    pub e_theta: f64,
    /// `(x - x_r, y - y_r, wrap(theta - theta_r))`.
    pub x_tilde: Vector3<f64>,
}

pub fn compute_errors(measured: &Pose, reference: &Pose) -> Errors {
    let dx = measured.x - reference.x;
    let dy = measured.y - reference.y;
    let dth = wrap_angle(measured.theta - reference.theta);
    Errors {
        e_p: dx.hypot(dy),
        e_theta: dth,
        x_tilde: Vector3::new(dx, dy, dth),
    }
}

/// Individual control terms of one period. `u_total` is after saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBreakdown {
    pub u_l: Twist,
    pub u_f: Twist,
    pub u_a: Twist,
    pub u_total: Twist,
}

impl ControlBreakdown {
    pub fn unsaturated(&self) -> Twist {
        self.u_l + self.u_f + self.u_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Controller period (s).
    pub dt: f64,
    /// Diagonal of the state weight `Q`.
    pub q: [f64; 3],
    /// Diagonal of the input weight `R`.
    pub r: [f64; 2],
    pub v_ref: f64,
    pub alpha: f64,
    pub omega_max: f64,
    pub search_window: usize,
    pub riccati_tol: f64,
    pub riccati_max_iter: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let ff = FeedforwardConfig::default();
        Self {
            dt: 0.05,
            q: [1.0, 1.0, 0.5],
            r: [0.1, 0.1],
            v_ref: ff.v_ref,
            alpha: ff.alpha,
            omega_max: 1.0,
            search_window: ff.search_window,
            riccati_tol: lqr::DEFAULT_TOLERANCE,
            riccati_max_iter: lqr::DEFAULT_MAX_ITER,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let fail = |m: &str| Err(ControllerError::Config(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail("dt must be positive");
        }
        if !self.q.iter().all(|q| *q >= 0.0) {
            return fail("Q must be positive semi-definite");
        }
        if !self.r.iter().all(|r| *r > 0.0) {
            return fail("R must be positive definite");
        }
        if !(self.omega_max > 0.0) {
            return fail("omega_max must be positive");
        }
        if !(self.riccati_tol > 0.0) || self.riccati_max_iter == 0 {
            return fail("Riccati tolerance and iteration limit must be positive");
        }
        Ok(())
    }

    pub fn weights(&self) -> LqrWeights {
        LqrWeights::diagonal(self.q, self.r)
    }

    pub fn feedforward(&self) -> FeedforwardConfig {
        FeedforwardConfig {
            v_ref: self.v_ref,
            alpha: self.alpha,
            search_window: self.search_window,
        }
    }
}

/// Everything produced by one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub matched: MatchResult,
    pub errors: Errors,
    pub gain: LqrGain,
    pub control: ControlBreakdown,
}

/// Controller state for one vehicle.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    weights: LqrWeights,
    matcher: Matcher,
    snn: Option<AdaptiveSnn>,
    warm: Option<Matrix3<f64>>,
}

impl Controller {
    /// `snn = None` gives the LQR + feedforward benchmark.
    pub fn new(cfg: ControllerConfig, snn: Option<&SnnConfig>) -> Result<Self, ControllerError> {
        cfg.validate()?;
        let snn = snn.map(AdaptiveSnn::new).transpose()?;
        Ok(Self {
            weights: cfg.weights(),
            matcher: Matcher::new(cfg.search_window),
            snn,
            warm: None,
            cfg,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn snn(&self) -> Option<&AdaptiveSnn> {
        self.snn.as_ref()
    }

    pub fn snn_mut(&mut self) -> Option<&mut AdaptiveSnn> {
        self.snn.as_mut()
    }

    /// Call after replacing the reference trajectory.
    pub fn reset_matcher(&mut self) {
        self.matcher.reset();
    }

    fn gain_at(&mut self, matched: &MatchResult) -> Result<LqrGain, ControllerError> {
        let ref_twist = Twist::new(self.cfg.v_ref, self.cfg.v_ref * matched.ref_curvature);
        let model = lqr::linearize(&matched.ref_pose, &ref_twist, self.cfg.dt)?;
        let (tol, max_iter) = (self.cfg.riccati_tol, self.cfg.riccati_max_iter);
        let gain = match self.warm {
            Some(p0) => lqr::solve_dare_from(&model, &self.weights, &p0, tol, max_iter)
                .or_else(|_| lqr::solve_dare(&model, &self.weights, tol, max_iter))?,
            None => lqr::solve_dare(&model, &self.weights, tol, max_iter)?,
        };
        self.warm = Some(gain.p);
        Ok(gain)
    }

    /// One control period for the measured pose.
    pub fn control_step(
        &mut self,
        measured: &Pose,
        traj: &Trajectory,
    ) -> Result<StepOutput, ControllerError> {
        let matched = self.matcher.find(traj, &measured.position())?;
        let errors = compute_errors(measured, &matched.ref_pose);
        let gain = self.gain_at(&matched)?;
        let u_l = lqr::feedback(&gain, &errors.x_tilde);
        let u_f = feedforward(&matched, &self.cfg.feedforward());
        let u_a = match self.snn.as_mut() {
            Some(snn) => snn.control(errors.e_p, errors.e_theta, self.cfg.dt),
            None => Twist::ZERO,
        };
        let u_total = saturate(u_l + u_f + u_a, self.cfg.omega_max);
        Ok(StepOutput {
            matched,
            errors,
            gain,
            control: ControlBreakdown {
                u_l,
                u_f,
                u_a,
                u_total,
            },
        })
    }
}
