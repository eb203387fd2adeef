//! `pppnav`: PURR maps, planning and Monte Carlo checks from the command line.
//!
//! Every subcommand resolves a [`config::RunConfig`] from defaults, an
//! optional `--config` JSON file and flags (flags win), and stamps the
//! config's SHA-256 on every file it writes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible or no path,
//! 4 I/O error.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pppnav::{Aabb, Exec};

use config::{RunConfig, SceneSource};
use error::CliError;

#[derive(Parser)]
#[command(name = "pppnav", version, about = "Collision probabilities, PURR maps and spline planning over density fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a PURR map from a scene and write it with a timing record.
    BuildPurr(BuildPurrArgs),
    /// Plan trajectories through a PURR map.
    Plan(PlanArgs),
    /// Draw one point-process realization and write it as PLY.
    Sample(SampleArgs),
    /// Monte Carlo safety rates of PURR-free poses and planned trajectories.
    Validate(ValidateArgs),
    /// Point-process entropy and depth log-likelihood.
    Stats(StatsArgs),
    /// Depth distribution along a ray and a Monte Carlo vs quadrature comparison.
    RenderCheck(RenderCheckArgs),
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v = parse_floats(s)?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 3 numbers, got {}", v.len()))
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"))).collect()
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [n] => Ok([*n; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err("expected N or NX,NY,NZ".into()),
    }
}

fn parse_box(s: &str) -> Result<Aabb, String> {
    let v = parse_floats(s)?;
    match v.as_slice() {
        [a, b, c, d, e, f] => Ok(Aabb::new([*a, *b, *c], [*d, *e, *f])),
        _ => Err("expected xmin,ymin,zmin,xmax,ymax,zmax".into()),
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Analytic scene JSON.
    #[arg(long, conflicts_with = "grid")]
    scene: Option<PathBuf>,
    /// Density grid file.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Grid vertices used when sampling an analytic scene (N or NX,NY,NZ).
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
    /// Region sampled from an analytic scene: xmin,ymin,zmin,xmax,ymax,zmax.
    #[arg(long, value_parser = parse_box)]
    bbox: Option<Aabb>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Allowed inter-penetration volume.
    #[arg(long)]
    vmax: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a_aux: Option<f64>,
    /// Ray sampling thickness.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    robot_radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// PURR file (default `<out_dir>/map.purr`).
    #[arg(long)]
    purr: Option<PathBuf>,
    /// Run data-parallel loops sequentially.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::from_file(self.config.as_deref())?;
        if let Some(p) = &self.scene {
            c.scene = Some(SceneSource::Analytic(p.clone()));
        }
        if let Some(p) = &self.grid {
            c.scene = Some(SceneSource::Grid(p.clone()));
        }
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.ppp.sigma, self.sigma);
        set(&mut c.ppp.v_max, self.vmax);
        set(&mut c.ppp.gamma, self.gamma);
        set(&mut c.ppp.a_aux, self.a_aux);
        set(&mut c.ppp.delta_t, self.dt);
        set(&mut c.ppp.alpha, self.alpha);
        set(&mut c.robot_radius, self.robot_radius);
        if let Some(d) = self.dims {
            c.dims = d;
        }
        if let Some(b) = self.bbox {
            c.bbox = b;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out_dir {
            c.out_dir = o.clone();
        }
        if let Some(p) = &self.purr {
            c.purr = Some(p.clone());
        }
        Ok(c)
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

#[derive(Args, Debug)]
struct BuildPurrArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    start: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    goal: Option<[f64; 3]>,
    /// Batch mode: N start/goal pairs at opposite points of a horizontal circle.
    #[arg(long, conflicts_with_all = ["start", "goal"])]
    circle: Option<usize>,
    /// Circle radius (default: 0.4 of the smaller horizontal map extent).
    #[arg(long)]
    circle_radius: Option<f64>,
    /// Circle center (default: map center).
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    circle_center: Option<[f64; 3]>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    continuity: Option<usize>,
    #[arg(long)]
    snap_order: Option<usize>,
    #[arg(long)]
    smooth_weight: Option<f64>,
    #[arg(long)]
    overlap_theta: Option<f64>,
    /// Speed limit used for time scaling.
    #[arg(long)]
    vmax_dyn: Option<f64>,
    /// Acceleration limit used for time scaling.
    #[arg(long)]
    amax_dyn: Option<f64>,
    /// interior_point or admm.
    #[arg(long)]
    qp_method: Option<String>,
    /// Also write sampled trajectories as CSV (t, x, y, z, speed).
    #[arg(long)]
    csv: bool,
    /// CSV samples per segment.
    #[arg(long, default_value_t = 20)]
    csv_samples: usize,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// Volume carried by each point (default: the auxiliary particle volume).
    #[arg(long)]
    particle_volume: Option<f64>,
    /// Exact trilinear sampling instead of per-cell homogeneous placement.
    #[arg(long)]
    thinned: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    poses: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    samples_per_segment: Option<usize>,
    /// Plan files written by `plan`; each trajectory gets a report.
    #[arg(long, num_args = 1..)]
    plans: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    common: Common,
    /// Entropy region: xmin,ymin,zmin,xmax,ymax,zmax (default: scene bounds).
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    region: Option<Aabb>,
    /// Reference area in `lambda = gamma rho / a_ref` (default: a_aux).
    #[arg(long)]
    a_ref: Option<f64>,
    /// Midpoint lattice per axis (default: grid resolution over the region).
    #[arg(long, value_parser = parse_dims)]
    resolution: Option<[usize; 3]>,
    /// Ray origin for the depth log-likelihood.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, requires_all = ["ray_dir", "depths"])]
    ray_origin: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    ray_dir: Option<[f64; 3]>,
    #[arg(long, default_value_t = 0.0)]
    t_near: f64,
    #[arg(long, default_value_t = 1.0)]
    t_far: f64,
    /// Observed depths, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
    depths: Option<Vec<f64>>,
    /// Quadrature step for line integrals.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
}

#[derive(Args, Debug)]
struct RenderCheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    origin: [f64; 3],
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    dir: [f64; 3],
    #[arg(long, default_value_t = 0.0)]
    t_near: f64,
    #[arg(long, default_value_t = 1.0)]
    t_far: f64,
    /// Quadrature and depth-table step.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Rows in the depth CSV.
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Monte Carlo samples.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::BuildPurr(a) => commands::build_purr(&a.common.resolve()?, a.common.exec()),
        Command::Plan(a) => {
            let mut c = a.common.resolve()?;
            let p = &mut c.planner;
            macro_rules! over {
                ($($f:ident <- $v:expr),*) => { $(if let Some(v) = $v { p.$f = v; })* };
            }
            over!(
                degree <- a.degree,
                continuity <- a.continuity,
                snap_order <- a.snap_order,
                smooth_weight <- a.smooth_weight,
                overlap_theta <- a.overlap_theta,
                v_max_dyn <- a.vmax_dyn,
                a_max_dyn <- a.amax_dyn,
                qp_method <- a.qp_method.clone()
            );
            let queries = match (a.start, a.goal, a.circle) {
                (Some(s), Some(g), None) => commands::Queries::Single(s, g),
                (None, None, Some(n)) => commands::Queries::Circle {
                    n,
                    radius: a.circle_radius,
                    center: a.circle_center,
                },
                _ => return Err(CliError::config("give --start and --goal, or --circle N")),
            };
            commands::plan(&c, &queries, a.csv.then_some(a.csv_samples), a.common.exec())
        }
        Command::Sample(a) => commands::sample(&a.common.resolve()?, a.particle_volume, a.thinned, a.common.exec()),
        Command::Validate(a) => {
            let mut c = a.common.resolve()?;
            if let Some(v) = a.poses {
                c.validate.n_poses = v;
            }
            if let Some(v) = a.realizations {
                c.validate.n_realizations = v;
            }
            if let Some(v) = a.samples_per_segment {
                c.validate.samples_per_segment = v;
            }
            commands::validate(&c, &a.plans, a.common.exec())
        }
        Command::Stats(a) => {
            let c = a.common.resolve()?;
            let ray = match (a.ray_origin, a.ray_dir, a.depths) {
                (Some(o), Some(d), Some(depths)) => Some(commands::DepthQuery {
                    origin: o,
                    dir: d,
                    t_near: a.t_near,
                    t_far: a.t_far,
                    depths,
                }),
                _ => None,
            };
            commands::stats(&c, a.region, a.a_ref, a.resolution, ray, a.step)
        }
        Command::RenderCheck(a) => {
            let c = a.common.resolve()?;
            let q = commands::RenderQuery {
                origin: a.origin,
                dir: a.dir,
                t_near: a.t_near,
                t_far: a.t_far,
                step: a.step,
                points: a.points,
                samples: a.samples,
            };
            commands::render_check(&c, &q, a.common.exec())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            // a closed pipe is not a failure of the command
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code)
        }
    }
}
