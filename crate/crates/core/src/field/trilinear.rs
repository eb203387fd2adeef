use nalgebra::{SMatrix, SVector};

use super::FieldError;

/// Trilinear interpolant `c1 + c2 x + c3 y + c4 z + c5 xy + c6 yz + c7 xz + c8 xyz`
/// over the cell `[a_x, b_x] x [a_y, b_y] x [a_z, b_z]` in local coordinates.
///
/// Vertex `v` of the cell is at offset bits `(v & 1, v >> 1 & 1, v >> 2 & 1)`,
/// i.e. x varies fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrilinearCellCoeffs {
    pub c: [f64; 8],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl TrilinearCellCoeffs {
    /// Closed-form coefficients for a cell whose local origin is its min corner,
    /// so the bounds are `[0, h]` per axis.
    pub fn from_vertices(h: [f64; 3], v: [f64; 8]) -> Self {
        let [hx, hy, hz] = h;
        let c1 = v[0];
        let c2 = (v[1] - v[0]) / hx;
        let c3 = (v[2] - v[0]) / hy;
        let c4 = (v[4] - v[0]) / hz;
        let c5 = (v[3] - v[1] - v[2] + v[0]) / (hx * hy);
        let c6 = (v[6] - v[2] - v[4] + v[0]) / (hy * hz);
        let c7 = (v[5] - v[1] - v[4] + v[0]) / (hx * hz);
        let c8 = (v[7] - v[3] - v[5] - v[6] + v[1] + v[2] + v[4] - v[0]) / (hx * hy * hz);
        Self {
            c: [c1, c2, c3, c4, c5, c6, c7, c8],
            lo: [0.0; 3],
            hi: h,
        }
    }

    /// Solves the 8x8 vertex system for arbitrary cell bounds.
    pub fn fit(lo: [f64; 3], hi: [f64; 3], v: [f64; 8]) -> Result<Self, FieldError> {
        if (0..3).any(|a| hi[a] <= lo[a]) {
            return Err(FieldError::DegenerateBox { min: lo, max: hi });
        }
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        for vert in 0..8 {
            let x = if vert & 1 == 0 { lo[0] } else { hi[0] };
            let y = if vert & 2 == 0 { lo[1] } else { hi[1] };
            let z = if vert & 4 == 0 { lo[2] } else { hi[2] };
            let row = monomials(x, y, z);
            for (k, m) in row.iter().enumerate() {
                a[(vert, k)] = *m;
            }
        }
        let rhs = SVector::<f64, 8>::from(v);
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| FieldError::Header("singular trilinear system".into()))?;
        let mut c = [0.0; 8];
        c.copy_from_slice(sol.as_slice());
        Ok(Self { c, lo, hi })
    }

    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        let m = monomials(x, y, z);
        self.c.iter().zip(m.iter()).map(|(c, m)| c * m).sum()
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.hi[a] - self.lo[a]).product()
    }
}

fn monomials(x: f64, y: f64, z: f64) -> [f64; 8] {
    [1.0, x, y, z, x * y, y * z, x * z, x * y * z]
}
