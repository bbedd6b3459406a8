use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use spikewall_core::harness::cases::{run_scenario, ControllerKind, RunOutput};
use spikewall_core::harness::config::{ReferenceSpec, ScenarioConfig};
use spikewall_core::harness::io::write_outputs;
use spikewall_core::harness::room::RoomSpec;
use spikewall_core::spline::{self, WallSide};

#[derive(Parser)]
#[command(name = "spikewall", version, about = "Adaptive spiking wall-following simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write logs and metrics.
    Run(RunArgs),
    /// Fit a wall to an x,y point cloud and write the offset trajectory.
    Fit(FitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    A,
    B,
    C,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Which {
    Snn,
    Lqr,
    Both,
}

#[derive(Parser)]
struct RunArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, value_enum, default_value = "both")]
    controller: Which,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the one named in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sensor noise and both neuron populations.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dump_spikes: bool,
    /// Override a config value, e.g. `--set snn.learning_rate=2e-6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Parser)]
struct FitArgs {
    /// CSV of ordered wall points (x,y), header optional.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.18)]
    offset: f64,
    #[arg(long, value_enum, default_value = "right")]
    side: Side,
    #[arg(long, default_value_t = spline::DEFAULT_DEGREE)]
    degree: usize,
    #[arg(long, default_value_t = spline::DEFAULT_SAMPLES)]
    samples: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Right,
    Left,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .with_context(|| format!("override {s:?} is not KEY=VALUE"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn print_summary(name: &str, run: &RunOutput) {
    let m = &run.metrics;
    let conv = m
        .convergence_time
        .map_or_else(|| "not converged".to_string(), |t| format!("{t:.2} s"));
    print!(
        "{name} {:>3}: mae {:.4} m, convergence {conv}, final e_p {:.4} m",
        run.kind.name(),
        m.mae,
        m.final_e_p
    );
    if let Some(t) = run.collision {
        print!(", COLLISION at {t:.2} s");
    }
    println!();
}

fn run(args: RunArgs) -> Result<()> {
    let overrides = parse_overrides(&args.overrides)?;
    let mut cfg = ScenarioConfig::load_with_overrides(&args.config, &overrides)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let expected = match args.scenario {
        Scenario::A => matches!(cfg.reference, ReferenceSpec::Line { .. }),
        Scenario::B => matches!(cfg.reference, ReferenceSpec::Sinusoid { .. }),
        Scenario::C => matches!(cfg.reference, ReferenceSpec::Room(_)),
    };
    if !expected {
        bail!("config {} does not describe the requested scenario", args.config.display());
    }
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.output.dump_spikes |= args.dump_spikes;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());

    let kinds: &[ControllerKind] = match args.controller {
        Which::Snn => &[ControllerKind::Snn],
        Which::Lqr => &[ControllerKind::Lqr],
        Which::Both => &[ControllerKind::Snn, ControllerKind::Lqr],
    };
    let runs = kinds
        .iter()
        .map(|&k| run_scenario(&cfg, k))
        .collect::<Result<Vec<_>, _>>()?;
    let room = match &cfg.reference {
        ReferenceSpec::Room(spec) => Some(RoomSpec::load(&spec.room)?),
        _ => None,
    };
    let refs: Vec<&RunOutput> = runs.iter().collect();
    let files = write_outputs(&out, &cfg.name, &refs, room.as_ref())?;
    for r in &runs {
        print_summary(&cfg.name, r);
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let points = spline::read_points_csv(file)?;
    let curve = spline::fit_wall(&points, args.degree)?;
    let side = match args.side {
        Side::Right => WallSide::Right,
        Side::Left => WallSide::Left,
    };
    let traj = spline::offset_trajectory(&curve, args.offset, args.samples, side)?;
    write_trajectory(&args.out, &traj)?;
    println!(
        "fitted {} points, wrote {} samples ({:.3} m) to {}",
        points.len(),
        traj.len(),
        traj.length(),
        args.out.display()
    );
    Ok(())
}

fn write_trajectory(path: &Path, traj: &spline::Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["s", "x", "y", "heading", "curvature"])?;
    for p in traj.points() {
        w.write_record([p.s, p.position.x, p.position.y, p.heading, p.curvature].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Fit(args) => fit(args),
    }
}
