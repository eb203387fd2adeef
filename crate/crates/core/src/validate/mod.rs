//! Monte Carlo and geometric checks of the probabilistic claims.
//!
//! Safety rates are estimated by sampling the point process exactly: near each
//! pose the trilinear intensity is majorised cell by cell and thinned, so no
//! quantity computed by the PURR pipeline is reused.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::field::{trilerp, AnalyticScene, DensityGrid, FieldError};
use crate::geom::{Aabb, Vec3};
use crate::planner::SplineTrajectory;
use crate::ppp::{
    cell_seed, poisson_draw, sample_cell, stream_seed, PointRealization, PppConfig, PppError,
    SamplingMode,
};
use crate::purr::PurrMap;

/// Two-sided 99% normal quantile.
pub const WILSON_Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("the PURR map has no free cells")]
    NoFreeCells,
    #[error("PURR map has {purr:?} cells but the grid has {grid:?}")]
    Mismatch { purr: [usize; 3], grid: [usize; 3] },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ppp(#[from] PppError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Volume occupied by the realization's points in the closed ball of radius
/// `radius` around `pose`, each point carrying `v_aux`.
pub fn interpenetration_volume(
    realization: &PointRealization,
    pose: &Vec3,
    radius: f64,
    cfg: &PppConfig,
) -> f64 {
    let r2 = radius * radius;
    let n = realization
        .points
        .iter()
        .filter(|p| (Vec3::from(**p) - pose).norm_squared() <= r2)
        .count();
    n as f64 * cfg.v_aux()
}

/// Wilson score interval for `successes` out of `n` trials.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (
        ((centre - half) / denom).clamp(0.0, 1.0),
        ((centre + half) / denom).clamp(0.0, 1.0),
    )
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    sub: Aabb,
    cell_min: [f64; 3],
    verts: [f64; 8],
    vmax: f64,
}

/// Exact sampler of the point count in one closed ball.
struct BallSampler {
    center: Vec3,
    r2: f64,
    h: [f64; 3],
    pieces: Vec<Piece>,
    cum: Vec<f64>,
    total: f64,
}

impl BallSampler {
    /// `scale` maps `integral rho` to expected point count.
    fn new(grid: &DensityGrid, center: Vec3, radius: f64, scale: f64) -> Self {
        let h = grid.spacing();
        let nc = grid.cell_dims();
        let gb = grid.bbox();
        let ball = Aabb::new(
            std::array::from_fn(|a| center[a] - radius),
            std::array::from_fn(|a| center[a] + radius),
        );
        let mut pieces = Vec::new();
        let mut cum = Vec::new();
        let mut total = 0.0;
        if let Some(clip) = ball.intersection(gb) {
            let idx = |x: f64, a: usize| -> usize {
                (((x - gb.min[a]) / h[a]).floor().max(0.0) as usize).min(nc[a] - 1)
            };
            let lo: [usize; 3] = std::array::from_fn(|a| idx(clip.min[a], a));
            let hi: [usize; 3] = std::array::from_fn(|a| idx(clip.max[a], a));
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        let cell = [i, j, k];
                        let cb = grid.cell_box(cell);
                        if cb.distance_sq(&center) > radius * radius {
                            continue;
                        }
                        let Some(sub) = cb.intersection(&clip) else {
                            continue;
                        };
                        let verts = grid.cell_vertices(cell);
                        let vmax = verts.iter().copied().fold(0.0, f64::max);
                        let mass = scale * vmax * sub.volume();
                        if !(mass > 0.0) {
                            continue;
                        }
                        total += mass;
                        pieces.push(Piece {
                            sub,
                            cell_min: cb.min,
                            verts,
                            vmax,
                        });
                        cum.push(total);
                    }
                }
            }
        }
        Self {
            center,
            r2: radius * radius,
            h,
            pieces,
            cum,
            total,
        }
    }

    /// One realization's count in the ball. With `limit = Some(n)` the draw
    /// stops as soon as the side of `n` is decided and the returned value is
    /// only guaranteed to lie on the same side as the true count.
    fn draw(&self, rng: &mut ChaCha8Rng, limit: Option<f64>) -> u64 {
        let n = poisson_draw(rng, self.total);
        if let Some(l) = limit {
            if n as f64 <= l {
                return n;
            }
        }
        let mut count = 0u64;
        for i in 0..n {
            let x = rng.random::<f64>() * self.total;
            let k = self.cum.partition_point(|&c| c <= x).min(self.pieces.len() - 1);
            let pc = &self.pieces[k];
            let p: [f64; 3] =
                std::array::from_fn(|a| pc.sub.min[a] + rng.random::<f64>() * (pc.sub.max[a] - pc.sub.min[a]));
            if (Vec3::from(p) - self.center).norm_squared() <= self.r2 {
                let f: [f64; 3] = std::array::from_fn(|a| ((p[a] - pc.cell_min[a]) / self.h[a]).clamp(0.0, 1.0));
                if rng.random::<f64>() * pc.vmax < trilerp(&pc.verts, f) {
                    count += 1;
                }
            }
            if let Some(l) = limit {
                let remaining = n - i - 1;
                if count as f64 > l || (count + remaining) as f64 <= l {
                    return count;
                }
            }
        }
        count
    }
}

/// Safety estimate at one sampled pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub cell: [usize; 3],
    pub position: [f64; 3],
    /// Realizations with inter-penetration at most `v_max`.
    pub safe: u64,
    pub rate: f64,
    /// Expected point count in the ball under the cell majorant.
    pub majorant_mass: f64,
}

/// Per-trajectory statistics against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub n_samples: usize,
    /// Smallest signed distance to a solid primitive; `None` when the scene
    /// has none (read as `+inf`, see [`TrajectoryReport::min_sdf`]).
    pub min_signed_distance: Option<f64>,
    pub max_interpenetration: f64,
    /// Sampled poses whose inter-penetration exceeds `v_max`.
    pub poses_over: usize,
    pub length: f64,
    pub chord: f64,
    pub length_excess: f64,
    pub seed: u64,
}

impl TrajectoryReport {
    pub fn min_sdf(&self) -> f64 {
        self.min_signed_distance.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub scene: String,
    pub config: PppConfig,
    pub robot_radius: f64,
    pub seed: u64,
    pub n_poses: usize,
    pub n_realizations: usize,
    /// Fraction of all pose-realization pairs within `v_max`.
    pub aggregate_rate: f64,
    pub wilson_lower_99: f64,
    pub wilson_upper_99: f64,
    /// Fraction of poses whose own estimate reaches `sigma`.
    pub poses_meeting_sigma: f64,
    pub min_pose_rate: f64,
    pub poses: Vec<PoseEstimate>,
    pub trajectories: Vec<TrajectoryReport>,
}

impl SafetyReport {
    pub fn wilson_half_width(&self) -> f64 {
        0.5 * (self.wilson_upper_99 - self.wilson_lower_99)
    }

    /// Fraction of trajectories with at least one pose above `v_max`.
    pub fn trajectories_over(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        let n = self.trajectories.iter().filter(|t| t.poses_over > 0).count();
        n as f64 / self.trajectories.len() as f64
    }

    pub fn max_interpenetrations(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.max_interpenetration).collect()
    }

    pub fn min_distances(&self) -> Vec<f64> {
        self.trajectories.iter().map(TrajectoryReport::min_sdf).collect()
    }

    pub fn write_json(&self, w: &mut impl Write) -> Result<(), ValidateError> {
        serde_json::to_writer_pretty(&mut *w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn write_poses_csv(&self, w: &mut impl Write) -> Result<(), ValidateError> {
        writeln!(w, "pose,i,j,k,x,y,z,safe,rate,majorant_mass")?;
        for (n, p) in self.poses.iter().enumerate() {
            writeln!(
                w,
                "{n},{},{},{},{},{},{},{},{},{}",
                p.cell[0],
                p.cell[1],
                p.cell[2],
                p.position[0],
                p.position[1],
                p.position[2],
                p.safe,
                p.rate,
                p.majorant_mass
            )?;
        }
        Ok(())
    }

    pub fn write_trajectories_csv(&self, w: &mut impl Write) -> Result<(), ValidateError> {
        writeln!(
            w,
            "trajectory,n_samples,min_sdf,max_interpenetration,poses_over,length,chord,length_excess"
        )?;
        for (n, t) in self.trajectories.iter().enumerate() {
            writeln!(
                w,
                "{n},{},{},{},{},{},{},{}",
                t.n_samples,
                t.min_sdf(),
                t.max_interpenetration,
                t.poses_over,
                t.length,
                t.chord,
                t.length_excess
            )?;
        }
        Ok(())
    }
}

/// Run parameters for [`pointwise_safety_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyRun {
    pub n_poses: usize,
    pub n_realizations: usize,
    pub seed: u64,
}

/// Samples `n_poses` positions uniformly over PURR-free cells and, at each,
/// draws `n_realizations` point-process realizations near the robot ball.
///
/// Pose `k` uses the streams `stream_seed(seed, k, 0)` (placement) and
/// `stream_seed(seed, k, 1)` (realizations), so results do not depend on `exec`.
pub fn pointwise_safety_rate(
    scene: &str,
    purr: &PurrMap,
    grid: &DensityGrid,
    cfg: &PppConfig,
    robot_radius: f64,
    run: SafetyRun,
    exec: Exec,
) -> Result<SafetyReport, ValidateError> {
    cfg.validate()?;
    if purr.dims != grid.cell_dims() {
        return Err(ValidateError::Mismatch {
            purr: purr.dims,
            grid: grid.cell_dims(),
        });
    }
    if run.n_poses == 0 || run.n_realizations == 0 {
        return Err(ValidateError::Config("n_poses and n_realizations must be positive".into()));
    }
    if !(robot_radius >= 0.0 && robot_radius.is_finite()) {
        return Err(ValidateError::Config(format!("robot radius {robot_radius}")));
    }
    let free: Vec<[usize; 3]> = purr.safe_cells().collect();
    if free.is_empty() {
        return Err(ValidateError::NoFreeCells);
    }
    let scale = cfg.intensity_scale();
    let n_max = cfg.n_aux_max();
    let poses: Vec<PoseEstimate> = exec.map_range(run.n_poses, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(run.seed, k as u64, 0));
        let cell = free[rng.random_range(0..free.len())];
        let b = grid.cell_box(cell);
        let position: [f64; 3] =
            std::array::from_fn(|a| b.min[a] + rng.random::<f64>() * (b.max[a] - b.min[a]));
        let sampler = BallSampler::new(grid, Vec3::from(position), robot_radius, scale);
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(run.seed, k as u64, 1));
        let safe = (0..run.n_realizations)
            .filter(|_| sampler.draw(&mut rng, Some(n_max)) as f64 <= n_max)
            .count() as u64;
        PoseEstimate {
            cell,
            position,
            safe,
            rate: safe as f64 / run.n_realizations as f64,
            majorant_mass: sampler.total,
        }
    });
    let successes: u64 = poses.iter().map(|p| p.safe).sum();
    let trials = (run.n_poses * run.n_realizations) as u64;
    let (lo, hi) = wilson_interval(successes, trials, WILSON_Z_99);
    let meeting = poses.iter().filter(|p| p.rate >= cfg.sigma).count();
    Ok(SafetyReport {
        scene: scene.to_string(),
        config: *cfg,
        robot_radius,
        seed: run.seed,
        n_poses: run.n_poses,
        n_realizations: run.n_realizations,
        aggregate_rate: successes as f64 / trials as f64,
        wilson_lower_99: lo,
        wilson_upper_99: hi,
        poses_meeting_sigma: meeting as f64 / run.n_poses as f64,
        min_pose_rate: poses.iter().map(|p| p.rate).fold(1.0, f64::min),
        poses,
        trajectories: Vec::new(),
    })
}

/// Ground-truth statistics of one trajectory sampled at `samples_per_segment`
/// parameters per segment.
///
/// Inter-penetration uses a single realization with seed `seed`, drawn lazily
/// cell by cell exactly as `sample_realization_with` in thinned mode with
/// particles of volume `v_aux` would draw it.
pub fn trajectory_report(
    traj: &SplineTrajectory,
    grid: &DensityGrid,
    cfg: &PppConfig,
    scene: &AnalyticScene,
    robot_radius: f64,
    samples_per_segment: usize,
    seed: u64,
) -> Result<TrajectoryReport, ValidateError> {
    cfg.validate()?;
    let samples = traj.sample(samples_per_segment);
    let scale = cfg.intensity_scale();
    let h = grid.spacing();
    let nc = grid.cell_dims();
    let gb = *grid.bbox();
    let r2 = robot_radius * robot_radius;
    let mut cache: HashMap<usize, Vec<[f64; 3]>> = HashMap::new();
    let mut min_sdf: Option<f64> = None;
    let mut max_ip: f64 = 0.0;
    let mut over = 0;
    for (_, _, p) in &samples {
        let c = Vec3::from(*p);
        if let Some(d) = scene.signed_distance(&c) {
            min_sdf = Some(min_sdf.map_or(d, |m| m.min(d)));
        }
        let ball = Aabb::new(
            std::array::from_fn(|a| c[a] - robot_radius),
            std::array::from_fn(|a| c[a] + robot_radius),
        );
        let mut count = 0usize;
        if let Some(clip) = ball.intersection(&gb) {
            let idx = |x: f64, a: usize| -> usize {
                (((x - gb.min[a]) / h[a]).floor().max(0.0) as usize).min(nc[a] - 1)
            };
            for k in idx(clip.min[2], 2)..=idx(clip.max[2], 2) {
                for j in idx(clip.min[1], 1)..=idx(clip.max[1], 1) {
                    for i in idx(clip.min[0], 0)..=idx(clip.max[0], 0) {
                        let lin = i + nc[0] * (j + nc[1] * k);
                        let pts = cache.entry(lin).or_insert_with(|| {
                            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, lin as u64));
                            let mut out = Vec::new();
                            sample_cell(grid, [i, j, k], scale, SamplingMode::Thinned, &mut rng, &mut out);
                            out
                        });
                        count += pts
                            .iter()
                            .filter(|q| (Vec3::from(**q) - c).norm_squared() <= r2)
                            .count();
                    }
                }
            }
        }
        let ip = count as f64 * cfg.v_aux();
        max_ip = max_ip.max(ip);
        if ip > cfg.v_max {
            over += 1;
        }
    }
    let length = traj.length(samples_per_segment);
    let chord = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (Vec3::from(b.2) - Vec3::from(a.2)).norm(),
        _ => 0.0,
    };
    Ok(TrajectoryReport {
        n_samples: samples.len(),
        min_signed_distance: min_sdf,
        max_interpenetration: max_ip,
        poses_over: over,
        length,
        chord,
        length_excess: (length - chord).max(0.0),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Primitive;
    use crate::ppp::sample_realization_with;
    use crate::purr::purr_pipeline;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn realization(points: Vec<[f64; 3]>) -> PointRealization {
        PointRealization {
            points,
            region: Aabb::unit(),
            seed: 0,
            particle_volume: PppConfig::default().v_aux(),
            mode: SamplingMode::Thinned,
        }
    }

    #[test]
    fn interpenetration_counts_closed_ball() {
        let cfg = PppConfig::default();
        let o = Vec3::zeros();
        assert_eq!(interpenetration_volume(&realization(vec![]), &o, 0.1, &cfg), 0.0);
        let n = cfg.n_aux_max().round() as usize;
        let inside = realization(vec![[0.01, 0.0, 0.0]; n]);
        let v = interpenetration_volume(&inside, &o, 0.1, &cfg);
        assert!((v - cfg.v_max).abs() < 1e-12 * cfg.v_max, "{v}");
        let edge = realization(vec![[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.5001, 0.0, 0.0]]);
        assert_eq!(interpenetration_volume(&edge, &o, 0.5, &cfg), 2.0 * cfg.v_aux());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(100, 100, WILSON_Z_99);
        assert_eq!(hi, 1.0);
        // n / (n + z^2) at p = 1
        assert!((lo - 100.0 / (100.0 + WILSON_Z_99 * WILSON_Z_99)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(50, 100, WILSON_Z_99);
        assert!((lo + hi - 1.0).abs() < 1e-12);
        assert!(lo < 0.5 && hi > 0.5);
    }

    fn homogeneous(rho: f64) -> DensityGrid {
        DensityGrid::constant([9, 9, 9], Aabb::unit(), rho).unwrap()
    }

    #[test]
    fn ball_counts_are_poisson() {
        // Expected count scale * rho * (4/3) pi r^3 on a homogeneous field.
        let cfg = PppConfig::default();
        let r = 0.2;
        let rho = 5.0 / (cfg.intensity_scale() * 4.0 / 3.0 * std::f64::consts::PI * r * r * r);
        let grid = homogeneous(rho);
        let s = BallSampler::new(&grid, Vec3::new(0.5, 0.45, 0.55), r, cfg.intensity_scale());
        let mean = 5.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 10_000;
        let bins = 13;
        let mut hist = vec![0u64; bins];
        for _ in 0..draws {
            let n = s.draw(&mut rng, None) as usize;
            hist[n.min(bins - 1)] += 1;
        }
        let mut pmf = vec![0.0; bins];
        let mut term = f64::exp(-mean);
        for (k, p) in pmf.iter_mut().enumerate().take(bins - 1) {
            *p = term;
            term *= mean / (k + 1) as f64;
        }
        pmf[bins - 1] = 1.0 - pmf[..bins - 1].iter().sum::<f64>();
        let chi2: f64 = hist
            .iter()
            .zip(&pmf)
            .map(|(&o, &p)| {
                let e = p * draws as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        let pval = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
        assert!(pval > 0.01, "chi2 {chi2} p {pval}");
    }

    #[test]
    fn ball_mean_matches_trilinear_integral() {
        // Linear ramp rho = x: the ball integral is rho(center) * volume.
        let grid = DensityGrid::from_fn([11, 11, 11], Aabb::unit(), |p| p.x).unwrap();
        let r = 0.15;
        let c = Vec3::new(0.37, 0.5, 0.52);
        let vol = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let scale = 20.0 / (c.x * vol);
        let s = BallSampler::new(&grid, c, r, scale);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let sum: u64 = (0..n).map(|_| s.draw(&mut rng, None)).sum();
        let mean = sum as f64 / n as f64;
        let se = (20.0 / n as f64).sqrt();
        assert!((mean - 20.0).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn early_exit_keeps_side() {
        let grid = homogeneous(1.0);
        let r = 0.2;
        let scale = 30.0 / (4.0 / 3.0 * std::f64::consts::PI * r * r * r);
        let s = BallSampler::new(&grid, Vec3::new(0.5, 0.5, 0.5), r, scale);
        let mut a = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let mut b = a.clone();
            let full = s.draw(&mut a, None);
            let fast = s.draw(&mut b, Some(30.0));
            assert_eq!(full <= 30, fast <= 30);
        }
    }

    fn blob_scene() -> (AnalyticScene, DensityGrid) {
        let scene = AnalyticScene::new(
            0.0,
            vec![Primitive::Gaussian {
                center: [0.5, 0.5, 0.5],
                sigma: 0.08,
                peak: 400.0,
                color: None,
            }],
        )
        .unwrap();
        let grid = scene.sample([21, 21, 21], Aabb::unit()).unwrap();
        (scene, grid)
    }

    fn cfg() -> PppConfig {
        PppConfig {
            v_max: 1e-8,
            ..PppConfig::default()
        }
    }

    #[test]
    fn empty_scene_rate_is_one() {
        let cfg = cfg();
        let grid = homogeneous(0.0);
        let out = purr_pipeline(&grid, 0.1, &cfg, Exec::Sequential).unwrap();
        let run = SafetyRun {
            n_poses: 20,
            n_realizations: 50,
            seed: 1,
        };
        let rep = pointwise_safety_rate("empty", &out.map, &grid, &cfg, 0.1, run, Exec::Sequential).unwrap();
        assert_eq!(rep.aggregate_rate, 1.0);
        assert_eq!(rep.poses_meeting_sigma, 1.0);
        assert!(rep.wilson_lower_99 > 0.99);
    }

    #[test]
    fn no_free_cells_is_an_error() {
        let cfg = cfg();
        let grid = homogeneous(1e9);
        let out = purr_pipeline(&grid, 0.1, &cfg, Exec::Sequential).unwrap();
        assert_eq!(out.map.unsafe_count(), out.map.len());
        let run = SafetyRun {
            n_poses: 5,
            n_realizations: 5,
            seed: 1,
        };
        let e = pointwise_safety_rate("full", &out.map, &grid, &cfg, 0.1, run, Exec::Sequential);
        assert!(matches!(e, Err(ValidateError::NoFreeCells)));
    }

    #[test]
    fn blob_scene_meets_sigma_and_is_reproducible() {
        let cfg = cfg();
        let (_, grid) = blob_scene();
        let r = 0.06;
        let out = purr_pipeline(&grid, r, &cfg, Exec::Sequential).unwrap();
        assert!(out.map.unsafe_count() > 0);
        let run = SafetyRun {
            n_poses: 60,
            n_realizations: 200,
            seed: 42,
        };
        let a = pointwise_safety_rate("blob", &out.map, &grid, &cfg, r, run, Exec::Sequential).unwrap();
        let b = pointwise_safety_rate("blob", &out.map, &grid, &cfg, r, run, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.wilson_lower_99 >= cfg.sigma - 0.01, "{}", a.wilson_lower_99);
        assert!(a.aggregate_rate >= cfg.sigma, "{}", a.aggregate_rate);
    }

    #[test]
    fn estimator_converges() {
        let cfg = cfg();
        let (_, grid) = blob_scene();
        let r = 0.06;
        let out = purr_pipeline(&grid, r, &cfg, Exec::Sequential).unwrap();
        let mk = |n| SafetyRun {
            n_poses: 40,
            n_realizations: n,
            seed: 9,
        };
        let a = pointwise_safety_rate("blob", &out.map, &grid, &cfg, r, mk(200), Exec::default()).unwrap();
        let b = pointwise_safety_rate("blob", &out.map, &grid, &cfg, r, mk(400), Exec::default()).unwrap();
        let d = (a.aggregate_rate - b.aggregate_rate).abs();
        assert!(d < 2.0 * a.wilson_half_width(), "{d}");
    }

    fn line(a: [f64; 3], b: [f64; 3]) -> SplineTrajectory {
        SplineTrajectory {
            degree: 1,
            continuity: 0,
            segments: vec![vec![a, b]],
            boxes: vec![Aabb::unit()],
            durations: vec![1.0],
        }
    }

    #[test]
    fn trajectory_in_empty_scene() {
        let cfg = cfg();
        let scene = AnalyticScene::new(0.0, vec![]).unwrap();
        let grid = homogeneous(0.0);
        let t = line([0.1, 0.2, 0.3], [0.9, 0.7, 0.4]);
        let rep = trajectory_report(&t, &grid, &cfg, &scene, 0.05, 33, 0).unwrap();
        assert_eq!(rep.min_sdf(), f64::INFINITY);
        assert_eq!(rep.max_interpenetration, 0.0);
        assert!(rep.length_excess >= 0.0 && rep.length_excess < 1e-6);
        assert_eq!(rep.poses_over, 0);
    }

    #[test]
    fn grazing_sphere_distance() {
        let cfg = cfg();
        let (c, r, d) = ([0.5, 0.5, 0.5], 0.1, 0.13);
        let scene = AnalyticScene::new(
            0.0,
            vec![Primitive::Sphere {
                center: c,
                radius: r,
                density: 0.0,
                color: None,
            }],
        )
        .unwrap();
        let grid = homogeneous(0.0);
        // Odd sample count puts a sample at the closest point.
        let t = line([0.1, 0.5 + d, 0.5], [0.9, 0.5 + d, 0.5]);
        let rep = trajectory_report(&t, &grid, &cfg, &scene, 0.02, 41, 0).unwrap();
        assert!((rep.min_sdf() - (d - r)).abs() < 1e-12, "{}", rep.min_sdf());
    }

    #[test]
    fn trajectory_matches_full_realization() {
        // Coarse particles keep the full-grid realization small.
        let cfg = PppConfig {
            a_aux: 1e-4,
            v_max: 2e-5,
            ..PppConfig::default()
        };
        let (scene, grid) = blob_scene();
        let t = line([0.2, 0.5, 0.5], [0.8, 0.52, 0.5]);
        let r = 0.05;
        let rep = trajectory_report(&t, &grid, &cfg, &scene, r, 25, 5).unwrap();
        let full = sample_realization_with(&grid, &cfg, cfg.v_aux(), 5, SamplingMode::Thinned, Exec::Sequential).unwrap();
        let worst = t
            .sample(25)
            .iter()
            .map(|s| interpenetration_volume(&full, &Vec3::from(s.2), r, &cfg))
            .fold(0.0, f64::max);
        assert_eq!(rep.max_interpenetration, worst);
        assert!(worst > cfg.v_max);
        assert!(rep.poses_over > 0);
        assert!(rep.length_excess >= 0.0);
    }

    #[test]
    fn csv_and_json_outputs() {
        let cfg = cfg();
        let grid = homogeneous(0.0);
        let out = purr_pipeline(&grid, 0.1, &cfg, Exec::Sequential).unwrap();
        let run = SafetyRun {
            n_poses: 3,
            n_realizations: 4,
            seed: 2,
        };
        let mut rep = pointwise_safety_rate("e", &out.map, &grid, &cfg, 0.1, run, Exec::Sequential).unwrap();
        let scene = AnalyticScene::new(0.0, vec![]).unwrap();
        rep.trajectories
            .push(trajectory_report(&line([0.2; 3], [0.8; 3]), &grid, &cfg, &scene, 0.1, 5, 0).unwrap());
        let mut csv = Vec::new();
        rep.write_poses_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
        let mut csv = Vec::new();
        rep.write_trajectories_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains(",inf,"));
        let mut js = Vec::new();
        rep.write_json(&mut js).unwrap();
        let back: SafetyReport = serde_json::from_slice(&js).unwrap();
        assert_eq!(back, rep);
        assert_eq!(rep.trajectories_over(), 0.0);
    }
}
