//! CSV and TOML output. Numbers are written with Rust's shortest round-trip
//! formatting, which is exact and locale independent.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::cases::{ControllerKind, RunOutput};
use super::metrics::StepRecord;
use super::room::RoomSpec;
use super::HarnessError;

pub const LOG_HEADER: [&str; 19] = [
    "t", "x", "y", "theta", "x_meas", "y_meas", "theta_meas", "match_index", "e_p", "e_theta",
    "u_l_v", "u_l_omega", "u_f_v", "u_f_omega", "u_a_v", "u_a_omega", "u_v", "u_omega", "phase",
];

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn record_row(r: &StepRecord) -> Vec<String> {
    let phase = if r.e_p.is_nan() { "explore" } else { "track" };
    let nums = [
        r.t,
        r.true_pose.x,
        r.true_pose.y,
        r.true_pose.theta,
        r.measured.x,
        r.measured.y,
        r.measured.theta,
    ];
    let mut row: Vec<String> = nums.iter().map(f64::to_string).collect();
    row.push(r.match_index.to_string());
    let rest = [
        r.e_p,
        r.e_theta,
        r.u_l.v,
        r.u_l.omega,
        r.u_f.v,
        r.u_f.omega,
        r.u_a.v,
        r.u_a.omega,
        r.u_total.v,
        r.u_total.omega,
    ];
    row.extend(rest.iter().map(f64::to_string));
    row.push(phase.to_string());
    row
}

pub fn write_log<W: Write>(out: W, records: &[StepRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| HarnessError::Io(e.to_string());
    w.write_record(LOG_HEADER).map_err(err)?;
    for r in records {
        w.write_record(record_row(r)).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

pub const METRICS_HEADER: [&str; 10] = [
    "scenario",
    "controller",
    "mae",
    "convergence_time",
    "path_length",
    "final_e_p",
    "final_e_theta",
    "samples",
    "collision_time",
    "refit_failures",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics<W: Write>(out: W, scenario: &str, runs: &[&RunOutput]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| HarnessError::Io(e.to_string());
    w.write_record(METRICS_HEADER).map_err(err)?;
    for run in runs {
        let m = &run.metrics;
        w.write_record([
            scenario.to_string(),
            run.kind.name().to_string(),
            m.mae.to_string(),
            opt(m.convergence_time),
            m.path_length.to_string(),
            m.final_e_p.to_string(),
            opt(m.final_e_theta),
            m.samples.to_string(),
            opt(run.collision),
            run.refit_failures.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

pub fn write_spikes<W: Write>(out: W, spikes: &[(f64, usize)]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| HarnessError::Io(e.to_string());
    w.write_record(["t", "neuron_index"]).map_err(err)?;
    for (t, i) in spikes {
        w.write_record([t.to_string(), i.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

fn create(path: &Path) -> Result<fs::File, HarnessError> {
    fs::File::create(path).map_err(|e| io_err(path, e))
}

pub fn log_path(dir: &Path, scenario: &str, kind: ControllerKind) -> PathBuf {
    dir.join(format!("{scenario}_{}_log.csv", kind.name()))
}

/// Writes logs, optional spike rasters and the metrics summary of the given
/// runs into `dir`. Returns the files written.
pub fn write_outputs(
    dir: &Path,
    scenario: &str,
    runs: &[&RunOutput],
    room: Option<&RoomSpec>,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for run in runs {
        let path = log_path(dir, scenario, run.kind);
        write_log(create(&path)?, &run.records)?;
        written.push(path);
        if let Some(spikes) = &run.spikes {
            for (pop, raster) in [("velocity", &spikes.velocity), ("angular", &spikes.angular)] {
                let path = dir.join(format!("{scenario}_{}_spikes_{pop}.csv", run.kind.name()));
                write_spikes(create(&path)?, raster)?;
                written.push(path);
            }
        }
    }
    let path = dir.join(format!("{scenario}_metrics.csv"));
    write_metrics(create(&path)?, scenario, runs)?;
    written.push(path);
    if let Some(room) = room {
        let path = dir.join("room.toml");
        fs::write(&path, room.to_toml()).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
