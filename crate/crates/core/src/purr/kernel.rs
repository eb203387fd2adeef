use super::PurrError;

/// Voxel mask covering every cell whose interior meets the robot's bounding
/// sphere swept over the central cell.
///
/// Offset `o` is set iff the box-to-box distance between voxel `o` and the
/// central voxel is strictly below `radius`. The central voxel is always set.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotKernel {
    pub radius: f64,
    /// Half side length per axis; the mask is `(2 half + 1)` per axis.
    pub half: [usize; 3],
    /// x-fastest.
    pub mask: Vec<bool>,
}

impl RobotKernel {
    pub fn new(radius: f64, cell: [f64; 3]) -> Result<Self, PurrError> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(PurrError::Config(format!("robot radius must be non-negative, got {radius}")));
        }
        if cell.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(PurrError::Config(format!("cell size must be positive, got {cell:?}")));
        }
        // offset n is reachable iff (n - 1) h < r
        let half: [usize; 3] = std::array::from_fn(|a| (radius / cell[a]).ceil() as usize);
        let side = half.map(|h| 2 * h + 1);
        let mut mask = vec![false; side[0] * side[1] * side[2]];
        let r2 = radius * radius;
        for k in 0..side[2] {
            for j in 0..side[1] {
                for i in 0..side[0] {
                    let o = [i, j, k];
                    let d2: f64 = (0..3)
                        .map(|a| {
                            let n = o[a].abs_diff(half[a]);
                            let gap = n.saturating_sub(1) as f64 * cell[a];
                            gap * gap
                        })
                        .sum();
                    let center = o == half;
                    mask[i + side[0] * (j + side[1] * k)] = center || d2 < r2;
                }
            }
        }
        Ok(RobotKernel { radius, half, mask })
    }

    pub fn side(&self) -> [usize; 3] {
        self.half.map(|h| 2 * h + 1)
    }

    /// Whether offset `(dx, dy, dz)` from the center is in the mask.
    pub fn contains(&self, d: [isize; 3]) -> bool {
        let s = self.side();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let v = d[a] + self.half[a] as isize;
            if v < 0 || v as usize >= s[a] {
                return false;
            }
            idx[a] = v as usize;
        }
        self.mask[idx[0] + s[0] * (idx[1] + s[1] * idx[2])]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Set offsets as x-runs: `(dy, dz, m)` covers `dx` in `-m..=m`.
    ///
    /// Rows are contiguous and symmetric because the box distance grows with `|dx|`.
    pub(crate) fn rows(&self) -> Vec<(isize, isize, usize)> {
        let h = self.half.map(|v| v as isize);
        let mut rows = Vec::new();
        for dz in -h[2]..=h[2] {
            for dy in -h[1]..=h[1] {
                if let Some(m) = (0..=h[0]).rev().find(|&dx| self.contains([dx, dy, dz])) {
                    rows.push((dy, dz, m as usize));
                }
            }
        }
        rows
    }
}
