//! Banded symmetric LDL' factorization and row-sparse matrices for the QP solver.

use nalgebra::{DMatrix, DVector};

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    pub nrows: usize,
    pub ncols: usize,
    pub ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut ptr = Vec::with_capacity(m + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for i in 0..m {
            for j in 0..n {
                let v = a[(i, j)];
                if v != 0.0 {
                    col.push(j);
                    val.push(v);
                }
            }
            ptr.push(col.len());
        }
        Self {
            nrows: m,
            ncols: n,
            ptr,
            col,
            val,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ptr[i]..self.ptr[i + 1];
        self.col[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    /// Column span `(min, max)` of row `i`, `None` for an empty row.
    pub fn span(&self, i: usize) -> Option<(usize, usize)> {
        let r = self.ptr[i]..self.ptr[i + 1];
        let c = &self.col[r];
        Some((*c.first()?, *c.last()?))
    }

    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.nrows, |i, _| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    pub fn mul_t(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let yi = y[i];
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
        out
    }

    /// `|A| |y|` entrywise, transposed.
    pub fn abs_mul_t(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out[j] += v.abs() * y[i].abs();
            }
        }
        out
    }
}

/// Symmetric matrix stored by its lower band: row `i` holds columns
/// `i - bw ..= i`.
#[derive(Debug, Clone)]
pub(crate) struct Band {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Band {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn at(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` at `(i, j)` and, implicitly, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw);
        let k = self.at(i, j);
        self.data[k] += v;
    }

    /// `L D L'` without pivoting. Succeeds for positive definite and
    /// quasi-definite matrices; fails on a zero or non-finite pivot.
    pub fn factor(mut self) -> Option<Ldl> {
        let (n, bw) = (self.n, self.bw);
        let mut d = vec![0.0; n];
        let mut w = vec![0.0; bw + 1];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let kl = lo.max(j.saturating_sub(bw));
                let mut s = self.data[self.at(i, j)];
                for k in kl..j {
                    s -= w[k - lo] * self.data[self.at(j, k)];
                }
                // w holds L[i][k] * d[k]
                w[j - lo] = s;
                let l = s / d[j];
                let idx = self.at(i, j);
                self.data[idx] = l;
            }
            let mut di = self.data[self.at(i, i)];
            for j in lo..i {
                di -= w[j - lo] * self.data[self.at(i, j)];
            }
            if !(di != 0.0 && di.is_finite()) {
                return None;
            }
            d[i] = di;
        }
        Some(Ldl { band: self, d })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Ldl {
    band: Band,
    d: Vec<f64>,
}

impl Ldl {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, bw) = (self.band.n, self.band.bw);
        let mut x = b.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for j in lo..i {
                s -= self.band.data[self.band.at(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= self.band.data[self.band.at(j, i)] * x[j];
            }
            x[i] = s;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(rng: &mut ChaCha8Rng, n: usize, bw: usize, quasi: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                let v = rng.random_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            a[(i, i)] = if i >= n - quasi { -(bw as f64 + 2.0) } else { bw as f64 + 2.0 };
        }
        a
    }

    #[test]
    fn solves_banded_and_dense_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(n, bw, quasi) in &[(1, 0, 0), (10, 2, 0), (30, 5, 10), (25, 24, 8)] {
            let a = random_band(&mut rng, n, bw, quasi);
            let mut band = Band::zeros(n, bw);
            for i in 0..n {
                for j in i.saturating_sub(bw)..=i {
                    band.add(i, j, a[(i, j)]);
                }
            }
            let f = band.factor().unwrap();
            let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let x = f.solve(&b);
            assert!((&a * &x - &b).amax() < 1e-12, "{n} {bw}");
        }
    }

    #[test]
    fn zero_pivot_fails() {
        let band = Band::zeros(2, 1);
        assert!(band.factor().is_none());
    }

    #[test]
    fn sparse_products_match_dense() {
        let a = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 3.0, 0.0, 4.0]);
        let s = SparseRows::from_dense(&a);
        let x = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        assert_eq!(s.mul(&x), &a * &x);
        assert_eq!(s.mul_t(&y), a.transpose() * &y);
        assert_eq!(s.span(1), None);
        assert_eq!(s.span(2), Some((0, 3)));
    }
}
