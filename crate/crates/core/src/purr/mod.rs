//! Probabilistically unsafe robot region (PURR).
//!
//! Pipeline: per-cell expected auxiliary particle counts from the trilinear
//! density, a voxel kernel covering the robot's bounding sphere swept over a
//! cell, convolution of the two, and a Poisson CDF threshold per cell.

mod convolve;
mod kernel;
mod map;

pub use convolve::{convolve, RobotIntensityGrid};
pub use kernel::RobotKernel;
pub use map::{build_purr, PurrHeader, PurrMap, PURR_MAGIC};

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::field::{DensityGrid, FieldError, TrilinearCellCoeffs};
use crate::geom::Aabb;
use crate::ppp::{PppConfig, PppError};

#[derive(Debug, Error)]
pub enum PurrError {
    #[error("inverted cell bounds {lo:?}..{hi:?}")]
    InvertedBounds { lo: [f64; 3], hi: [f64; 3] },
    #[error("invalid parameter: {0}")]
    Config(String),
    #[error("malformed PURR file: {0}")]
    Format(String),
    #[error(transparent)]
    Ppp(#[from] PppError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Exact integral of the trilinear interpolant over its cell.
pub fn cell_integral(c: &TrilinearCellCoeffs) -> Result<f64, PurrError> {
    if (0..3).any(|a| !(c.hi[a] >= c.lo[a])) {
        return Err(PurrError::InvertedBounds { lo: c.lo, hi: c.hi });
    }
    Ok(cell_integral_unchecked(c))
}

pub(crate) fn cell_integral_unchecked(c: &TrilinearCellCoeffs) -> f64 {
    // first and second moments of each interval
    let m1: [f64; 3] = std::array::from_fn(|a| c.hi[a] - c.lo[a]);
    let m2: [f64; 3] = std::array::from_fn(|a| 0.5 * (c.hi[a] * c.hi[a] - c.lo[a] * c.lo[a]));
    let [x1, y1, z1] = m1;
    let [x2, y2, z2] = m2;
    let k = &c.c;
    k[0] * x1 * y1 * z1
        + k[1] * x2 * y1 * z1
        + k[2] * x1 * y2 * z1
        + k[3] * x1 * y1 * z2
        + k[4] * x2 * y2 * z1
        + k[5] * x1 * y2 * z2
        + k[6] * x2 * y1 * z2
        + k[7] * x2 * y2 * z2
}

/// Expected auxiliary particle count per cell, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIntensityGrid {
    pub dims: [usize; 3],
    pub bbox: Aabb,
    pub values: Vec<f64>,
}

impl CellIntensityGrid {
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.bbox.max[a] - self.bbox.min[a]) / self.dims[a] as f64)
    }
}

pub fn build_cell_intensity(
    grid: &DensityGrid,
    cfg: &PppConfig,
    exec: Exec,
) -> Result<CellIntensityGrid, PurrError> {
    cfg.validate()?;
    let dims = grid.cell_dims();
    let h = grid.spacing();
    let scale = cfg.intensity_scale();
    let slab = dims[0] * dims[1];
    let mut values = vec![0.0; slab * dims[2]];
    exec.for_each_chunk_mut(&mut values, slab, |k, out| {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let c = TrilinearCellCoeffs::from_vertices(h, grid.cell_vertices([i, j, k]));
                // rounding can leave tiny negatives on near-zero cells
                out[i + dims[0] * j] = (scale * cell_integral_unchecked(&c)).max(0.0);
            }
        }
    });
    Ok(CellIntensityGrid {
        dims,
        bbox: *grid.bbox(),
        values,
    })
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PurrTimings {
    pub cell_intensity: f64,
    pub kernel: f64,
    pub convolve: f64,
    pub threshold: f64,
}

impl PurrTimings {
    pub fn total(&self) -> f64 {
        self.cell_intensity + self.kernel + self.convolve + self.threshold
    }
}

pub struct PurrOutput {
    pub map: PurrMap,
    pub cell_intensity: CellIntensityGrid,
    pub robot_intensity: RobotIntensityGrid,
    pub kernel: RobotKernel,
    pub timings: PurrTimings,
}

/// Density grid to PURR, with out-of-grid space unsafe.
pub fn purr_pipeline(
    grid: &DensityGrid,
    robot_radius: f64,
    cfg: &PppConfig,
    exec: Exec,
) -> Result<PurrOutput, PurrError> {
    let t = Instant::now();
    let ic = build_cell_intensity(grid, cfg, exec)?;
    let t_ic = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let kernel = RobotKernel::new(robot_radius, grid.spacing())?;
    let t_k = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let ir = convolve(&ic, &kernel, f64::INFINITY, exec);
    let t_c = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let map = build_purr(&ir, cfg, exec)?;
    let t_th = t.elapsed().as_secs_f64();

    Ok(PurrOutput {
        map,
        cell_intensity: ic,
        robot_intensity: ir,
        kernel,
        timings: PurrTimings {
            cell_intensity: t_ic,
            kernel: t_k,
            convolve: t_c,
            threshold: t_th,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AnalyticScene, Primitive};
    use crate::geom::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_cell_integral() {
        let c = TrilinearCellCoeffs::from_vertices([1.0; 3], [2.5; 8]);
        assert!((cell_integral(&c).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn inverted_bounds_rejected() {
        let c = TrilinearCellCoeffs {
            c: [1.0; 8],
            lo: [0.0, 1.0, 0.0],
            hi: [1.0, 0.5, 1.0],
        };
        assert!(matches!(cell_integral(&c), Err(PurrError::InvertedBounds { .. })));
    }

    #[test]
    fn integral_is_vertex_mean_times_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v: [f64; 8] = std::array::from_fn(|_| rng.random::<f64>() * 10.0);
            let lo: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>() * 4.0 - 2.0);
            let hi: [f64; 3] = std::array::from_fn(|a| lo[a] + 0.1 + rng.random::<f64>());
            let c = TrilinearCellCoeffs::fit(lo, hi, v).unwrap();
            let expect = v.iter().sum::<f64>() / 8.0 * c.volume();
            let got = cell_integral(&c).unwrap();
            assert!((got - expect).abs() <= 1e-10 * expect.abs().max(1.0), "{got} {expect}");
        }
    }

    #[test]
    fn integral_matches_midpoint_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let c = TrilinearCellCoeffs {
                c: std::array::from_fn(|_| rng.random::<f64>() * 2.0 - 0.5),
                lo: [0.5, -1.0, 2.0],
                hi: [1.5, 0.25, 2.75],
            };
            let n = 64;
            let h: [f64; 3] = std::array::from_fn(|a| (c.hi[a] - c.lo[a]) / n as f64);
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        s += c.eval(
                            c.lo[0] + (i as f64 + 0.5) * h[0],
                            c.lo[1] + (j as f64 + 0.5) * h[1],
                            c.lo[2] + (k as f64 + 0.5) * h[2],
                        );
                    }
                }
            }
            s *= h[0] * h[1] * h[2];
            let got = cell_integral(&c).unwrap();
            assert!((got - s).abs() <= 1e-6 * s.abs(), "{got} {s}");
        }
    }

    fn cfg() -> PppConfig {
        PppConfig::default()
    }

    #[test]
    fn cell_intensity_closed_forms() {
        let bbox = Aabb::new([0.0; 3], [0.1, 0.2, 0.3]);
        let zero = DensityGrid::constant([5, 5, 5], bbox, 0.0).unwrap();
        let ic = build_cell_intensity(&zero, &cfg(), Exec::default()).unwrap();
        assert!(ic.values.iter().all(|&v| v == 0.0));

        let rho0 = 3.0;
        let g = DensityGrid::constant([5, 6, 7], bbox, rho0).unwrap();
        let ic = build_cell_intensity(&g, &cfg(), Exec::default()).unwrap();
        let expect = cfg().gamma * rho0 * g.cell_volume() / cfg().a_aux;
        assert_eq!(ic.dims, [4, 5, 6]);
        assert!(ic.values.iter().all(|&v| (v - expect).abs() <= 1e-12 * expect));

        let half = PppConfig { gamma: 0.5, ..cfg() };
        let a = build_cell_intensity(&g, &half, Exec::default()).unwrap();
        let b = build_cell_intensity(&g, &PppConfig { gamma: 1.0, ..cfg() }, Exec::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y);
        }
    }

    #[test]
    fn empty_scene_is_safe_inside() {
        let g = DensityGrid::constant([12; 3], Aabb::unit(), 0.0).unwrap();
        let out = purr_pipeline(&g, 0.05, &cfg(), Exec::default()).unwrap();
        let m = &out.map;
        let r = out.kernel.half;
        for k in 0..11 {
            for j in 0..11 {
                for i in 0..11 {
                    let interior = [i, j, k]
                        .iter()
                        .zip(&r)
                        .all(|(&c, &h)| c >= h && c + h < 11);
                    assert_eq!(m.is_unsafe([i, j, k]), !interior, "{i} {j} {k}");
                }
            }
        }
    }

    #[test]
    fn dense_sphere_unsafe_set_contains_dilation() {
        let scene = AnalyticScene::new(
            0.0,
            vec![Primitive::Sphere {
                center: [0.5, 0.5, 0.5],
                radius: 0.15,
                density: 1e3,
                color: None,
            }],
        )
        .unwrap();
        let g = scene.sample([41; 3], Aabb::unit()).unwrap();
        let radius = 0.06;
        let out = purr_pipeline(&g, radius, &cfg(), Exec::default()).unwrap();
        let m = &out.map;
        let mut checked = 0;
        for k in 0..40 {
            for j in 0..40 {
                for i in 0..40 {
                    let b = m.cell_box([i, j, k]);
                    // cell meets the sphere dilated by the robot radius, shrunk by one
                    // grid spacing so vertex sampling of the hard edge resolves it
                    let d = b.distance_sq(&Vec3::new(0.5, 0.5, 0.5)).sqrt();
                    if d < 0.15 + radius - 0.025 {
                        assert!(m.is_unsafe([i, j, k]), "{i} {j} {k}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn smaller_vmax_never_shrinks_unsafe_set() {
        let scene = AnalyticScene::new(
            1e-3,
            vec![Primitive::Gaussian {
                center: [0.4, 0.5, 0.6],
                sigma: 0.1,
                peak: 5.0,
                color: None,
            }],
        )
        .unwrap();
        let g = scene.sample([24; 3], Aabb::unit()).unwrap();
        let mut prev: Option<Vec<bool>> = None;
        for v_max in [5e-6, 2e-6, 1e-6, 5e-7, 2e-7, 1e-7] {
            let c = PppConfig { v_max, ..cfg() };
            let m = purr_pipeline(&g, 0.03, &c, Exec::default()).unwrap().map;
            if let Some(p) = &prev {
                assert!(p.iter().zip(&m.cells).all(|(&a, &b)| !a || b));
            }
            prev = Some(m.cells);
        }
    }

    #[test]
    fn pipeline_schedule_independent() {
        let scene = AnalyticScene::new(
            0.0,
            vec![Primitive::Gaussian {
                center: [0.3, 0.6, 0.5],
                sigma: 0.15,
                peak: 2.0,
                color: None,
            }],
        )
        .unwrap();
        let g = scene.sample([20; 3], Aabb::unit()).unwrap();
        let a = purr_pipeline(&g, 0.04, &cfg(), Exec::Sequential).unwrap();
        let b = purr_pipeline(&g, 0.04, &cfg(), Exec::Parallel).unwrap();
        assert_eq!(a.map, b.map);
        assert_eq!(a.robot_intensity.values, b.robot_intensity.values);
    }
}
