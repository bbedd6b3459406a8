//! Scenario description loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::controller::ControllerConfig;
use crate::snn::SnnConfig;
use crate::spline::WallSide;
use crate::vehicle::{DisturbanceConfig, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Wheel separation (m).
    pub track_width: f64,
    /// Euler substeps per controller period.
    pub substeps: usize,
    /// Body radius used for collision checks (m).
    pub robot_radius: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            track_width: 0.3,
            substeps: crate::vehicle::PLANT_SUBSTEPS,
            robot_radius: 0.1,
        }
    }
}

/// Reference path of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Horizontal line `y = y` for `x` in `[x0, x1]`.
    Line { y: f64, x0: f64, x1: f64, samples: usize },
    /// `y = amplitude sin(frequency x)` for `x` in `[x0, x1]`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        x0: f64,
        x1: f64,
        samples: usize,
    },
    /// Wall following inside a room read from `room`.
    Room(WallFollowSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallFollowSpec {
    /// Room file, relative to the scenario file.
    pub room: PathBuf,
    /// Distance kept from the wall (m).
    pub offset: f64,
    pub side: WallSide,
    pub degree: usize,
    /// Trajectory samples per refit.
    pub samples: usize,
    /// Spacing of the resampled wall points used as control points (m).
    pub point_spacing: f64,
    /// Lidar bearings used for fitting, relative to the heading (rad).
    pub fit_window: [f64; 2],
    /// Largest curvature accepted in a refitted trajectory (1/m).
    pub max_curvature: f64,
    /// Returns farther than this are not used for fitting (m).
    pub fit_range: f64,
    /// Range straight ahead at which exploration hands over to wall following (m).
    pub explore_stop_range: f64,
    /// Wall following time excluded from the error metrics (s).
    pub metrics_warmup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub e_p_threshold: f64,
    pub e_theta_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            e_p_threshold: 0.05,
            e_theta_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub dump_spikes: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            dump_spikes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Simulated time (s).
    pub duration: f64,
    pub start: Pose,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub snn: SnnConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a scenario and resolves the room path against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::load_with_overrides(path, &[])
    }

    /// As [`ScenarioConfig::load`], first replacing dotted keys such as
    /// `snn.learning_rate` with the given TOML values.
    pub fn load_with_overrides(path: &Path, overrides: &[(String, String)]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, value)?;
        }
        let mut cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        if let ReferenceSpec::Room(spec) = &mut cfg.reference {
            if spec.room.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                spec.room = base.join(&spec.room);
            }
            if !spec.room.is_file() {
                return Err(HarnessError::Config(format!(
                    "room file {} does not exist",
                    spec.room.display()
                )));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return fail(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.plant.track_width > 0.0) || self.plant.substeps == 0 {
            return fail("plant track_width and substeps must be positive".into());
        }
        if !(self.plant.robot_radius >= 0.0) {
            return fail("robot_radius must be non-negative".into());
        }
        self.disturbance.validate().map_err(HarnessError::Config)?;
        self.controller
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.reference {
            ReferenceSpec::Line { x0, x1, samples, .. }
            | ReferenceSpec::Sinusoid { x0, x1, samples, .. } => {
                if !(x1 > x0) || *samples < 2 {
                    return fail("reference needs x1 > x0 and at least 2 samples".into());
                }
            }
            ReferenceSpec::Room(w) => {
                if !(w.offset > 0.0 && w.point_spacing > 0.0 && w.fit_range > 0.0 && w.max_curvature > 0.0)
                    || w.samples < 2 {
                    return fail("wall following needs positive offset, spacing, range and samples".into());
                }
                if !(w.fit_window[0] < w.fit_window[1]) {
                    return fail("fit_window must be increasing".into());
                }
            }
        }
        Ok(())
    }

    /// Number of controller periods.
    pub fn steps(&self) -> usize {
        (self.duration / self.controller.dt).round() as usize
    }

    /// Applies a run seed to the noise generator and both populations.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.disturbance.rng_seed = seed;
        self.snn.seed_velocity = seed.wrapping_mul(2).wrapping_add(1);
        self.snn.seed_angular = seed.wrapping_mul(2).wrapping_add(2);
        self
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: &str) -> Result<(), HarnessError> {
    let parsed: toml::Table = toml::from_str(&format!("v = {value}"))
        .or_else(|_| toml::from_str(&format!("v = {value:?}")))
        .map_err(|e| HarnessError::Config(format!("bad value for {key}: {e}")))?;
    let value = parsed["v"].clone();
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| {
        HarnessError::Config(format!("empty override key {key:?}"))
    })?;
    let mut node = table;
    for part in parts {
        node = node
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{part} in {key} is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
