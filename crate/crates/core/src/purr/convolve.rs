use super::{CellIntensityGrid, RobotKernel};
use crate::exec::Exec;
use crate::geom::Aabb;

/// Kernel-summed cell intensity, same layout as [`CellIntensityGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RobotIntensityGrid {
    pub dims: [usize; 3],
    pub bbox: Aabb,
    pub values: Vec<f64>,
    pub robot_radius: f64,
}

impl RobotIntensityGrid {
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }
}

// Runs up to this length are summed directly; longer ones use row prefix sums.
const DIRECT_RUN: usize = 7;

/// `I_r(v) = sum over kernel offsets o of I_c(v + o)`. Each neighbor outside
/// the grid contributes `boundary`; `f64::INFINITY` marks boundary cells unsafe.
pub fn convolve(
    ic: &CellIntensityGrid,
    kernel: &RobotKernel,
    boundary: f64,
    exec: Exec,
) -> RobotIntensityGrid {
    let [nx, ny, nz] = ic.dims;
    let rows = kernel.rows();
    // prefix[(j + ny k) (nx + 1) + i] = sum of the first i values of row (j, k)
    let mut prefix = vec![0.0; (nx + 1) * ny * nz];
    for r in 0..ny * nz {
        let src = &ic.values[r * nx..(r + 1) * nx];
        let dst = &mut prefix[r * (nx + 1)..(r + 1) * (nx + 1)];
        for i in 0..nx {
            dst[i + 1] = dst[i] + src[i];
        }
    }

    let slab = nx * ny;
    let mut values = vec![0.0; slab * nz];
    exec.for_each_chunk_mut(&mut values, slab.max(1), |k, out| {
        for j in 0..ny {
            for i in 0..nx {
                let mut sum = 0.0;
                let mut missing = 0usize;
                for &(dy, dz, m) in &rows {
                    let y = j as isize + dy;
                    let z = k as isize + dz;
                    let run = 2 * m + 1;
                    if y < 0 || z < 0 || y as usize >= ny || z as usize >= nz {
                        missing += run;
                        continue;
                    }
                    let row = y as usize + ny * z as usize;
                    let x0 = i as isize - m as isize;
                    let x1 = i as isize + m as isize;
                    let lo = x0.max(0) as usize;
                    let hi = (x1.min(nx as isize - 1)) as usize;
                    missing += run - (hi + 1 - lo);
                    if run <= DIRECT_RUN {
                        let src = &ic.values[row * nx..(row + 1) * nx];
                        for v in &src[lo..=hi] {
                            sum += v;
                        }
                    } else {
                        let p = &prefix[row * (nx + 1)..(row + 1) * (nx + 1)];
                        sum += p[hi + 1] - p[lo];
                    }
                }
                if missing > 0 && boundary != 0.0 {
                    sum += boundary * missing as f64;
                }
                out[i + nx * j] = sum.max(0.0);
            }
        }
    });
    RobotIntensityGrid {
        dims: ic.dims,
        bbox: ic.bbox,
        values,
        robot_radius: kernel.radius,
    }
}
