//! Subcommand bodies. Each returns a JSON summary that `main` prints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use pppnav::field::{AnalyticScene, DensityField, DensityGrid};
use pppnav::planner::{plan as run_plan, Plan, SplineTrajectory};
use pppnav::ppp::{depth_log_likelihood, grid_resolution, ppp_entropy, sample_realization_with, SamplingMode};
use pppnav::purr::{purr_pipeline, PurrMap};
use pppnav::render::{
    depth_profile, render_ppp_monte_carlo, render_quadrature, ColorField, ConstantColor, DensityKappa, Frustum,
    McConfig, Ray,
};
use pppnav::validate::{pointwise_safety_rate, trajectory_report, SafetyRun};
use pppnav::{Aabb, Exec, Vec3};
use serde_json::{json, Value};

use crate::config::{require_file, RunConfig, SceneSource};
use crate::error::{CliError, EXIT_INFEASIBLE};

fn create_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(cfg.out_dir.display(), e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path.display(), e))
}

/// Writes `value` (an object) with the config hash added.
fn write_json(path: &Path, cfg: &RunConfig, mut value: Value) -> Result<Value, CliError> {
    value["config_hash"] = json!(cfg.hash());
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &value)
        .map_err(|e| CliError::io(path.display(), e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path.display(), e))?;
    Ok(value)
}

/// Writes CSV text behind a `# config_hash` comment line.
fn write_csv(path: &Path, cfg: &RunConfig, body: &[u8]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "# config_hash {}", cfg.hash())
        .and_then(|_| w.write_all(body))
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path.display(), e))
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

pub fn build_purr(cfg: &RunConfig, exec: Exec) -> Result<Value, CliError> {
    cfg.check()?;
    cfg.scene_source()?;
    create_out_dir(cfg)?;
    let t = Instant::now();
    let grid = cfg.grid()?;
    let t_load = secs(t);
    let out = purr_pipeline(&grid, cfg.robot_radius, &cfg.ppp, exec)?;

    let t = Instant::now();
    let path = cfg.purr_path();
    let mut bytes = Vec::new();
    out.map.write_to(&mut bytes)?;
    // The header is one JSON line; stamp the config hash into it.
    let split = bytes.iter().position(|&b| b == b'\n').expect("PURR header line");
    let mut header: Value = serde_json::from_slice(&bytes[..split]).expect("PURR header is JSON");
    header["config_hash"] = json!(cfg.hash());
    let mut w = create(&path)?;
    serde_json::to_writer(&mut w, &header)
        .map_err(|e| CliError::io(path.display(), e))?;
    w.write_all(&bytes[split..]).and_then(|_| w.flush()).map_err(|e| CliError::io(path.display(), e))?;
    let t_write = secs(t);

    let tm = out.timings;
    write_json(
        &cfg.out_dir.join("build_purr.json"),
        cfg,
        json!({
            "purr": path,
            "dims": out.map.dims,
            "unsafe_cells": out.map.unsafe_count(),
            "total_cells": out.map.len(),
            "stages": {
                "cell_intensity": tm.cell_intensity,
                "kernel": tm.kernel,
                "convolve": tm.convolve,
                "threshold": tm.threshold,
            },
            "pipeline_seconds": tm.total(),
            "load_seconds": t_load,
            "write_seconds": t_write,
            "parallel": exec.is_parallel(),
        }),
    )
}

fn load_purr(cfg: &RunConfig) -> Result<PurrMap, CliError> {
    let path = cfg.purr_path();
    require_file(&path)?;
    Ok(PurrMap::load(&path)?)
}

pub enum Queries {
    Single([f64; 3], [f64; 3]),
    Circle {
        n: usize,
        radius: Option<f64>,
        center: Option<[f64; 3]>,
    },
}

impl Queries {
    fn pairs(&self, bbox: &Aabb) -> Vec<([f64; 3], [f64; 3])> {
        match *self {
            Queries::Single(s, g) => vec![(s, g)],
            Queries::Circle { n, radius, center } => {
                let c = center.unwrap_or_else(|| bbox.center().into());
                let e = bbox.extent();
                let r = radius.unwrap_or(0.4 * e.x.min(e.y));
                (0..n)
                    .map(|i| {
                        let a = std::f64::consts::TAU * i as f64 / n as f64;
                        let (s, co) = a.sin_cos();
                        ([c[0] + r * co, c[1] + r * s, c[2]], [c[0] - r * co, c[1] - r * s, c[2]])
                    })
                    .collect()
            }
        }
    }
}

fn trajectory_csv(traj: &SplineTrajectory, per_segment: usize) -> Vec<u8> {
    let mut out = b"t,x,y,z,speed\n".to_vec();
    let n = per_segment.max(1);
    let mut t0 = 0.0;
    for (i, &dur) in traj.durations.iter().enumerate() {
        let last = i + 1 == traj.len();
        for k in 0..n + usize::from(last) {
            let s = k as f64 / n as f64;
            let (Ok(p), Ok(d)) = (traj.eval(i, s, 0), traj.eval(i, s, 1)) else {
                continue;
            };
            let speed = Vec3::from(d).norm() / dur;
            let _ = writeln!(out, "{},{},{},{},{}", t0 + s * dur, p[0], p[1], p[2], speed);
        }
        t0 += dur;
    }
    out
}

fn plan_record(start: [f64; 3], goal: [f64; 3], result: &Result<Plan, CliError>) -> Value {
    match result {
        Ok(p) => json!({
            "status": "ok",
            "start": start,
            "goal": goal,
            "objective": p.objective,
            "qp_iterations": p.qp_iterations,
            "path_voxels": p.path.voxels.len(),
            "corridor": p.corridor.boxes,
            "trajectory": p.trajectory,
            "timings": {
                "astar": p.timings.astar,
                "boxes": p.timings.boxes,
                "qp": p.timings.qp,
                "rescale": p.timings.rescale,
            },
        }),
        Err(e) => json!({
            "status": "failed",
            "start": start,
            "goal": goal,
            "error": e.reason,
            "message": e.message,
        }),
    }
}

pub fn plan(cfg: &RunConfig, queries: &Queries, csv: Option<usize>, exec: Exec) -> Result<Value, CliError> {
    cfg.ppp.validate().map_err(|e| CliError::config(e.to_string()))?;
    let params = cfg.planner.params()?;
    let purr = load_purr(cfg)?;
    create_out_dir(cfg)?;
    let pairs = queries.pairs(&purr.bbox);
    let single = matches!(queries, Queries::Single(..));

    let t = Instant::now();
    let results: Vec<Result<Plan, CliError>> = exec.map_range(pairs.len(), |i| {
        let (s, g) = pairs[i];
        run_plan(&purr, &Vec3::from(s), &Vec3::from(g), &params).map_err(CliError::from)
    });
    let t_all = secs(t);

    // parameter errors are the same for every query
    if let Some(Err(e)) = results.iter().find(|r| matches!(r, Err(e) if e.code != EXIT_INFEASIBLE)) {
        return Err(CliError::config(e.message.clone()));
    }
    let mut files = Vec::new();
    for (i, (r, &(s, g))) in results.iter().zip(&pairs).enumerate() {
        let stem = if single { "plan".to_string() } else { format!("plan_{i:03}") };
        let path = cfg.out_dir.join(format!("{stem}.json"));
        write_json(&path, cfg, plan_record(s, g, r))?;
        if let (Some(n), Ok(p)) = (csv, r) {
            write_csv(&cfg.out_dir.join(format!("{stem}.csv")), cfg, &trajectory_csv(&p.trajectory, n))?;
        }
        files.push(path);
    }
    let failed: Vec<usize> = (0..results.len()).filter(|&i| results[i].is_err()).collect();
    if single {
        if let Err(e) = &results[0] {
            return Err(CliError {
                code: e.code,
                reason: e.reason,
                message: e.message.clone(),
            });
        }
    }
    let summary = json!({
        "queries": pairs.len(),
        "succeeded": pairs.len() - failed.len(),
        "failed": failed,
        "plans": files,
        "seconds": t_all,
    });
    if single {
        let p = results[0].as_ref().expect("checked above");
        return Ok(json!({
            "config_hash": cfg.hash(),
            "status": "ok",
            "plan": files[0],
            "objective": p.objective,
            "segments": p.trajectory.len(),
            "duration": p.trajectory.durations.iter().sum::<f64>(),
            "path_voxels": p.path.voxels.len(),
            "boxes": p.corridor.boxes.len(),
        }));
    }
    let summary = write_json(&cfg.out_dir.join("plans.json"), cfg, summary)?;
    if !failed.is_empty() {
        return Err(CliError {
            code: EXIT_INFEASIBLE,
            reason: "some_plans_failed",
            message: format!("{} of {} queries failed: {:?}", failed.len(), pairs.len(), failed),
        });
    }
    Ok(summary)
}

pub fn sample(cfg: &RunConfig, particle_volume: Option<f64>, thinned: bool, exec: Exec) -> Result<Value, CliError> {
    cfg.check()?;
    cfg.scene_source()?;
    create_out_dir(cfg)?;
    let t = Instant::now();
    let grid = cfg.grid()?;
    let t_load = secs(t);
    let v_d = particle_volume.unwrap_or_else(|| cfg.ppp.v_aux());
    let mode = if thinned { SamplingMode::Thinned } else { SamplingMode::CellHomogeneous };
    let t = Instant::now();
    let real = sample_realization_with(&grid, &cfg.ppp, v_d, cfg.seed, mode, exec)?;
    let t_sample = secs(t);

    let mut ply = Vec::new();
    real.write_ply(&mut ply).expect("write to memory");
    // stamp the hash as a PLY comment right after the format line
    let at = ply.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).map_or(0, |(i, _)| i + 1);
    let comment = format!("comment config_hash {}\n", cfg.hash());
    ply.splice(at..at, comment.into_bytes());
    let path = cfg.out_dir.join("points.ply");
    let mut w = create(&path)?;
    w.write_all(&ply).and_then(|_| w.flush()).map_err(|e| CliError::io(path.display(), e))?;

    let mut side = real.sidecar();
    side["ply"] = json!(path);
    side["timings"] = json!({ "load": t_load, "sample": t_sample });
    write_json(&cfg.out_dir.join("points.json"), cfg, side)
}

/// Ground-truth grid aligned with the PURR cells.
fn validation_grid(cfg: &RunConfig, purr: &PurrMap) -> Result<(DensityGrid, Option<AnalyticScene>), CliError> {
    match cfg.scene_source()? {
        SceneSource::Analytic(p) => {
            let scene = AnalyticScene::load(p)?;
            let dims = purr.dims.map(|d| d + 1);
            Ok((scene.sample(dims, purr.bbox)?, Some(scene)))
        }
        SceneSource::Grid(p) => Ok((DensityGrid::load(p)?, None)),
    }
}

pub fn validate(cfg: &RunConfig, plans: &[PathBuf], exec: Exec) -> Result<Value, CliError> {
    cfg.check()?;
    for p in plans {
        require_file(p)?;
    }
    let purr = load_purr(cfg)?;
    create_out_dir(cfg)?;
    let t = Instant::now();
    let (grid, scene) = validation_grid(cfg, &purr)?;
    let t_load = secs(t);
    let name = match cfg.scene_source()? {
        SceneSource::Analytic(p) | SceneSource::Grid(p) => p.display().to_string(),
    };
    let run = SafetyRun {
        n_poses: cfg.validate.n_poses,
        n_realizations: cfg.validate.n_realizations,
        seed: cfg.seed,
    };
    let t = Instant::now();
    let mut report = pointwise_safety_rate(&name, &purr, &grid, &purr.config, purr.robot_radius, run, exec)?;
    let t_poses = secs(t);

    let t = Instant::now();
    if !plans.is_empty() {
        let scene = scene
            .as_ref()
            .ok_or_else(|| CliError::config("trajectory reports need an analytic scene (--scene)"))?;
        for (i, p) in plans.iter().enumerate() {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p.display(), e))?;
            let doc: Value =
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            let traj: SplineTrajectory = serde_json::from_value(doc["trajectory"].clone())
                .map_err(|e| CliError::config(format!("{}: no trajectory ({e})", p.display())))?;
            let seed = pppnav::ppp::stream_seed(cfg.seed, i as u64, 2);
            report.trajectories.push(trajectory_report(
                &traj,
                &grid,
                &purr.config,
                scene,
                purr.robot_radius,
                cfg.validate.samples_per_segment,
                seed,
            )?);
        }
    }
    let t_traj = secs(t);

    let mut csv = Vec::new();
    report.write_poses_csv(&mut csv)?;
    write_csv(&cfg.out_dir.join("poses.csv"), cfg, &csv)?;
    let mut csv = Vec::new();
    report.write_trajectories_csv(&mut csv)?;
    write_csv(&cfg.out_dir.join("trajectories.csv"), cfg, &csv)?;

    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["timings"] = json!({ "load": t_load, "poses": t_poses, "trajectories": t_traj });
    let full = write_json(&cfg.out_dir.join("validate.json"), cfg, value)?;
    Ok(json!({
        "config_hash": full["config_hash"],
        "aggregate_rate": report.aggregate_rate,
        "wilson_lower_99": report.wilson_lower_99,
        "wilson_upper_99": report.wilson_upper_99,
        "poses_meeting_sigma": report.poses_meeting_sigma,
        "sigma": purr.config.sigma,
        "trajectories": report.trajectories.len(),
        "report": cfg.out_dir.join("validate.json"),
    }))
}

/// A density field from either scene kind, plus its natural bounds.
enum Field {
    Analytic(AnalyticScene),
    Grid(DensityGrid),
}

impl Field {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(match cfg.analytic()? {
            Some(s) => Field::Analytic(s),
            None => Field::Grid(cfg.grid()?),
        })
    }

    fn density(&self) -> &dyn DensityField {
        match self {
            Field::Analytic(s) => s,
            Field::Grid(g) => g,
        }
    }
}

pub struct DepthQuery {
    pub origin: [f64; 3],
    pub dir: [f64; 3],
    pub t_near: f64,
    pub t_far: f64,
    pub depths: Vec<f64>,
}

pub fn stats(
    cfg: &RunConfig,
    region: Option<Aabb>,
    a_ref: Option<f64>,
    resolution: Option<[usize; 3]>,
    depth: Option<DepthQuery>,
    step: f64,
) -> Result<Value, CliError> {
    cfg.check()?;
    create_out_dir(cfg)?;
    let field = Field::load(cfg)?;
    let region = region.unwrap_or(match &field {
        Field::Analytic(_) => cfg.bbox,
        Field::Grid(g) => *g.bbox(),
    });
    let resolution = resolution.unwrap_or_else(|| match &field {
        Field::Analytic(_) => cfg.dims.map(|d| d - 1),
        Field::Grid(g) => grid_resolution(g, &region),
    });
    let a_ref = a_ref.unwrap_or(cfg.ppp.a_aux);
    let t = Instant::now();
    let entropy = ppp_entropy(&region, field.density(), cfg.ppp.gamma, a_ref, resolution)?;
    let t_entropy = secs(t);
    let mut out = json!({
        "entropy": entropy,
        "region": region,
        "gamma": cfg.ppp.gamma,
        "a_ref": a_ref,
        "resolution": resolution,
        "timings": { "entropy": t_entropy },
    });
    if let Some(q) = depth {
        let ray = Ray::new(Vec3::from(q.origin), Vec3::from(q.dir), q.t_near, q.t_far)?;
        let t = Instant::now();
        let ll = depth_log_likelihood(&ray, &q.depths, field.density(), step)?;
        out["log_likelihood"] = json!({
            "value": ll,
            "origin": q.origin,
            "dir": q.dir,
            "t_near": q.t_near,
            "t_far": q.t_far,
            "depths": q.depths,
            "step": step,
        });
        out["timings"]["log_likelihood"] = json!(secs(t));
    }
    write_json(&cfg.out_dir.join("stats.json"), cfg, out)
}

pub struct RenderQuery {
    pub origin: [f64; 3],
    pub dir: [f64; 3],
    pub t_near: f64,
    pub t_far: f64,
    pub step: f64,
    pub points: usize,
    pub samples: usize,
}

pub fn render_check(cfg: &RunConfig, q: &RenderQuery, exec: Exec) -> Result<Value, CliError> {
    cfg.check()?;
    create_out_dir(cfg)?;
    let field = Field::load(cfg)?;
    let white = ConstantColor([1.0; 3]);
    let (color, background): (&dyn ColorField, [f64; 3]) = match &field {
        Field::Analytic(s) => (s, s.background_color.unwrap_or([0.0; 3])),
        Field::Grid(_) => (&white, [0.0; 3]),
    };
    let ray = Ray::new(Vec3::from(q.origin), Vec3::from(q.dir), q.t_near, q.t_far)?;

    let t = Instant::now();
    let rows = depth_profile(&ray, field.density(), q.points, q.step)?;
    let mut csv = b"t,cdf,pdf,transmittance\n".to_vec();
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.t, r.cdf, r.pdf, r.transmittance);
    }
    write_csv(&cfg.out_dir.join("render_depth.csv"), cfg, &csv)?;
    let t_profile = secs(t);

    let t = Instant::now();
    let quad = render_quadrature(&ray, field.density(), color, q.step)?;
    let half = render_quadrature(&ray, field.density(), color, 0.5 * q.step)?;
    let t_quad = secs(t);
    let expected = quad.composite(background);
    let expected_half = half.composite(background);

    let t = Instant::now();
    let frustum = Frustum::new(ray, 1e-3, 1e-3, 0.0, 0.0)?;
    let mc = render_ppp_monte_carlo(
        &frustum,
        &DensityKappa(field.density()),
        color,
        &McConfig {
            n_samples: q.samples,
            seed: cfg.seed,
            step: q.step,
            background,
            exec,
        },
    )?;
    let t_mc = secs(t);

    let channels: Vec<Value> = (0..3)
        .map(|c| {
            let quad_err = 2.0 * (expected[c] - expected_half[c]).abs();
            let bound = 3.0 * mc.std_err[c] + quad_err;
            let diff = (mc.mean[c] - expected[c]).abs();
            json!({
                "quadrature": expected[c],
                "monte_carlo": mc.mean[c],
                "std_err": mc.std_err[c],
                "quadrature_error_bound": quad_err,
                "abs_diff": diff,
                "bound": bound,
                "within_bound": diff <= bound,
            })
        })
        .collect();
    let pass = channels.iter().all(|c| c["within_bound"] == json!(true));
    write_json(
        &cfg.out_dir.join("render_check.json"),
        cfg,
        json!({
            "ray": { "origin": q.origin, "dir": q.dir, "t_near": q.t_near, "t_far": q.t_far },
            "step": q.step,
            "samples": q.samples,
            "background": background,
            "transmittance": quad.transmittance,
            "occlusion_probability_mc_table": mc.occlusion_probability,
            "unoccluded_fraction": mc.unoccluded_fraction,
            "channels": channels,
            "pass": pass,
            "depth_csv": cfg.out_dir.join("render_depth.csv"),
            "timings": { "profile": t_profile, "quadrature": t_quad, "monte_carlo": t_mc },
        }),
    )
}
