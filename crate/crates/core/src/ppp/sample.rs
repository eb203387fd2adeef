use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{intensity_from_density, reweighted_expected_count, PppConfig, PppError};
use crate::exec::Exec;
use crate::field::DensityGrid;
use crate::geom::Aabb;
use crate::purr::cell_integral_unchecked as cell_integral;

/// How points are placed inside a lattice cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Poisson count from the cell integral, points uniform in the cell.
    /// Counts over whole cells are exact; positions ignore the in-cell slope.
    #[default]
    CellHomogeneous,
    /// Exact sampling of the trilinear intensity: proposals at the cell's
    /// maximum vertex intensity, accepted with probability `rho_hat / max`.
    Thinned,
}

/// One draw of the point process over a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRealization {
    pub points: Vec<[f64; 3]>,
    pub region: Aabb,
    pub seed: u64,
    /// Volume carried by each point.
    pub particle_volume: f64,
    pub mode: SamplingMode,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of cell `cell_index` within realization `seed`.
pub fn cell_seed(seed: u64, cell_index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(cell_index.wrapping_add(0x5151_5151)))
}

/// Deterministic sub-stream seed derived from a master seed and two counters.
pub fn stream_seed(master: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(a)) ^ b.wrapping_mul(0xd605_bbb5_8c8a_bbd1))
}

pub(crate) fn poisson_draw<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// Samples cell `cell` of `grid` into `out`. `scale` maps `integral rho` to the
/// expected particle count.
pub(crate) fn sample_cell(
    grid: &DensityGrid,
    cell: [usize; 3],
    scale: f64,
    mode: SamplingMode,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<[f64; 3]>,
) {
    let b = grid.cell_box(cell);
    let h = grid.spacing();
    let verts = grid.cell_vertices(cell);
    let uniform = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        std::array::from_fn(|a| b.min[a] + rng.random::<f64>() * h[a])
    };
    match mode {
        SamplingMode::CellHomogeneous => {
            let coeffs = crate::field::TrilinearCellCoeffs::from_vertices(h, verts);
            let n = poisson_draw(rng, scale * cell_integral(&coeffs));
            for _ in 0..n {
                out.push(uniform(rng));
            }
        }
        SamplingMode::Thinned => {
            let vmax = verts.iter().copied().fold(0.0, f64::max);
            let n = poisson_draw(rng, scale * vmax * grid.cell_volume());
            for _ in 0..n {
                let f: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
                let u: f64 = rng.random();
                let rho = crate::field::trilerp(&verts, f);
                if u * vmax < rho {
                    out.push(std::array::from_fn(|a| b.min[a] + f[a] * h[a]));
                }
            }
        }
    }
}

/// Draws a realization over the whole grid with particles of volume `v_d`,
/// per-cell homogeneous placement.
pub fn sample_realization(
    grid: &DensityGrid,
    cfg: &PppConfig,
    v_d: f64,
    seed: u64,
) -> Result<PointRealization, PppError> {
    sample_realization_with(grid, cfg, v_d, seed, SamplingMode::CellHomogeneous, Exec::default())
}

/// Cell `c` uses the RNG stream `cell_seed(seed, linear index of c)`, so the
/// output is independent of `exec`.
pub fn sample_realization_with(
    grid: &DensityGrid,
    cfg: &PppConfig,
    v_d: f64,
    seed: u64,
    mode: SamplingMode,
    exec: Exec,
) -> Result<PointRealization, PppError> {
    cfg.validate()?;
    // Expected auxiliary count per unit integral, reweighted to particles of volume v_d.
    let per_aux = intensity_from_density(1.0, cfg)?;
    let scale = reweighted_expected_count(per_aux, cfg.v_aux(), v_d)?;
    let [cx, cy, cz] = grid.cell_dims();
    let slabs: Vec<Vec<[f64; 3]>> = exec.map_range(cz, |k| {
        let mut out = Vec::new();
        for j in 0..cy {
            for i in 0..cx {
                let idx = (i + cx * (j + cy * k)) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, idx));
                sample_cell(grid, [i, j, k], scale, mode, &mut rng, &mut out);
            }
        }
        out
    });
    Ok(PointRealization {
        points: slabs.into_iter().flatten().collect(),
        region: *grid.bbox(),
        seed,
        particle_volume: v_d,
        mode,
    })
}

impl PointRealization {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count_in(&self, b: &Aabb) -> usize {
        self.points
            .iter()
            .filter(|p| b.contains(&crate::geom::Vec3::from(**p)))
            .count()
    }

    /// ASCII PLY with one `x y z` vertex per point.
    pub fn write_ply(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "comment seed {}", self.seed)?;
        writeln!(w, "element vertex {}", self.points.len())?;
        writeln!(w, "property float x")?;
        writeln!(w, "property float y")?;
        writeln!(w, "property float z")?;
        writeln!(w, "end_header")?;
        for p in &self.points {
            writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
        }
        Ok(())
    }

    /// Metadata written next to a PLY export.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "count": self.points.len(),
            "region": self.region,
            "particle_volume": self.particle_volume,
            "mode": self.mode,
        })
    }
}
