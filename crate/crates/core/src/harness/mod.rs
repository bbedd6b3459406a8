//! Scenario runners, synthetic lidar room, metrics and CSV output.

pub mod cases;
pub mod config;
pub mod io;
pub mod metrics;
pub mod room;

use thiserror::Error;

use crate::controller::ControllerError;
use crate::spline::SplineError;
use crate::vehicle::VehicleError;

pub use cases::{
    run_case_a, run_case_b, run_case_c, run_scenario, run_tracking, run_wall_follow, Comparison,
    ControllerKind, RunOutput,
};
pub use config::{ReferenceSpec, ScenarioConfig};
pub use metrics::{compute_metrics, Metrics, StepRecord};
pub use room::{raycast_lidar, RoomSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("pose ({x}, {y}) is outside the room")]
    OutsideRoom { x: f64, y: f64 },
    #[error("scenario needs a {0} reference")]
    WrongReference(&'static str),
    #[error("no wall trajectory available at t = {0}")]
    NoTrajectory(f64),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
}
