//! Adaptive wall-following control for a differential-drive vehicle.
//!
//! The pipeline fits a B-spline to sensed wall points, offsets it into a
//! reference trajectory, and tracks it with an LQR controller plus curvature
//! feedforward and an online-learning spiking compensator.

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod harness;
pub mod lqr;
pub mod matcher;
pub mod snn;
pub mod spline;
pub mod vehicle;

pub use controller::{compute_errors, ControlBreakdown, Controller, ControllerConfig, Errors};
pub use lqr::{LinearModel, LqrGain, LqrWeights};
pub use matcher::{MatchResult, Matcher};
pub use snn::{AdaptiveSnn, LifParams, PesRule, SnnConfig, SnnPopulation};
pub use spline::{SplineCurve, Trajectory, TrajectoryPoint, WallSide};
pub use vehicle::{DisturbanceConfig, Pose, Twist};
