//! Bernstein-basis helpers for scalar and 3D Bezier curves on `t in [0, 1]`.

use nalgebra::DMatrix;

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `n! / (n - d)!`.
pub fn falling_factorial(n: usize, d: usize) -> f64 {
    (0..d).map(|i| (n - i) as f64).product()
}

/// Control points of the `order`-th derivative curve (degree `N - order`).
pub fn derivative_points(points: &[[f64; 3]], order: usize) -> Vec<[f64; 3]> {
    let mut p = points.to_vec();
    for _ in 0..order.min(points.len()) {
        let deg = (p.len() - 1) as f64;
        p = p
            .windows(2)
            .map(|w| std::array::from_fn(|a| deg * (w[1][a] - w[0][a])))
            .collect();
    }
    p
}

/// De Casteljau evaluation.
pub fn de_casteljau(points: &[[f64; 3]], t: f64) -> [f64; 3] {
    if points.is_empty() {
        return [0.0; 3];
    }
    let mut b = points.to_vec();
    for r in 1..b.len() {
        for i in 0..b.len() - r {
            b[i] = std::array::from_fn(|a| (1.0 - t) * b[i][a] + t * b[i + 1][a]);
        }
    }
    b[0]
}

/// `(K+1) x (N+1)` matrix of `d`-th forward differences, `K = N - d`.
pub fn difference_matrix(n: usize, d: usize) -> DMatrix<f64> {
    let k = n - d;
    DMatrix::from_fn(k + 1, n + 1, |r, c| {
        if c >= r && c - r <= d {
            let j = c - r;
            let sign = if (d - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * binomial(d, j)
        } else {
            0.0
        }
    })
}

/// Gram matrix `G` of the degree-`k` Bernstein basis on `[0, 1]`.
pub fn bernstein_gram(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k + 1, k + 1, |m, n| {
        binomial(k, m) * binomial(k, n) / (binomial(2 * k, m + n) * (2 * k + 1) as f64)
    })
}

/// `Q` with `s' Q s = integral_0^1 (d^d/dt^d p)^2 dt` for one scalar curve of degree `n`.
pub fn derivative_gram(n: usize, d: usize) -> DMatrix<f64> {
    let m = difference_matrix(n, d);
    let c = falling_factorial(n, d);
    (c * c) * m.transpose() * bernstein_gram(n - d) * m
}

/// `S` with `s' S s = sum_k (s_{k+1} - s_k)^2`.
pub fn smoothing_matrix(n: usize) -> DMatrix<f64> {
    let d = difference_matrix(n, 1);
    d.transpose() * d
}

/// Coefficients `w` with `sum_j w_j s_j = d^k p / dt^k` at `t = 0` (`at_end = false`)
/// or `t = 1`, over all `N + 1` points, without the `N!/(N-k)!` factor.
pub fn end_derivative_row(n: usize, k: usize, at_end: bool) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    for j in 0..=k {
        let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
        let idx = if at_end { n - k + j } else { j };
        w[idx] = sign * binomial(k, j);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
        (0..=n).map(|_| std::array::from_fn(|_| rng.random::<f64>() * 2.0 - 1.0)).collect()
    }

    fn bernstein_eval(p: &[[f64; 3]], t: f64) -> [f64; 3] {
        let n = p.len() - 1;
        let mut out = [0.0; 3];
        for (k, pk) in p.iter().enumerate() {
            let b = binomial(n, k) * (1.0 - t).powi((n - k) as i32) * t.powi(k as i32);
            for a in 0..3 {
                out[a] += b * pk[a];
            }
        }
        out
    }

    #[test]
    fn endpoints_and_constant_curves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_points(&mut rng, 8);
        assert_eq!(de_casteljau(&p, 0.0), p[0]);
        assert_eq!(de_casteljau(&p, 1.0), p[8]);
        let c = vec![[0.3, -1.0, 2.0]; 9];
        for t in [0.0, 0.2, 0.77, 1.0] {
            let v = de_casteljau(&c, t);
            assert!((0..3).all(|a| (v[a] - c[0][a]).abs() < 1e-15));
        }
    }

    #[test]
    fn matches_power_form_and_start_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_points(&mut rng, 8);
        for t in [0.1, 0.5, 0.9] {
            let a = de_casteljau(&p, t);
            let b = bernstein_eval(&p, t);
            assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-13));
        }
        let d = derivative_points(&p, 1);
        let v = de_casteljau(&d, 0.0);
        assert!((0..3).all(|a| (v[a] - 8.0 * (p[1][a] - p[0][a])).abs() < 1e-12));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_points(&mut rng, 8);
        let d1 = derivative_points(&p, 1);
        let h = 1e-6;
        let t = 0.37;
        let fd: [f64; 3] = {
            let a = de_casteljau(&p, t + h);
            let b = de_casteljau(&p, t - h);
            std::array::from_fn(|k| (a[k] - b[k]) / (2.0 * h))
        };
        let v = de_casteljau(&d1, t);
        assert!((0..3).all(|k| (v[k] - fd[k]).abs() < 1e-7));
    }

    #[test]
    fn snap_gram_null_space_is_cubic() {
        let g = derivative_gram(8, 4);
        let eig = g.clone().symmetric_eigenvalues();
        let max = eig.amax();
        let zero = eig.iter().filter(|&&e| e.abs() < 1e-9 * max).count();
        assert_eq!(zero, 4);
        assert!(eig.iter().all(|&e| e > -1e-9 * max));
    }

    #[test]
    fn gram_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        let pts: Vec<[f64; 3]> = s.iter().map(|&v| [v, 0.0, 0.0]).collect();
        let d4 = derivative_points(&pts, 4);
        // Gauss-free composite Simpson; the integrand is a degree-8 polynomial
        let n = 2000;
        let mut acc = 0.0;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * de_casteljau(&d4, t)[0].powi(2);
        }
        acc /= 3.0 * n as f64;
        let sv = nalgebra::DVector::from_vec(s);
        let q = derivative_gram(8, 4);
        let exact = sv.dot(&(&q * &sv));
        assert!((acc - exact).abs() < 1e-8 * exact, "{acc} {exact}");
    }

    #[test]
    fn end_rows_give_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_points(&mut rng, 8);
        for k in 0..=4 {
            let dk = derivative_points(&p, k);
            let f = falling_factorial(8, k);
            for (at_end, t) in [(false, 0.0), (true, 1.0)] {
                let row = end_derivative_row(8, k, at_end);
                let v: f64 = row.iter().zip(&p).map(|(w, s)| w * s[0]).sum::<f64>() * f;
                assert!((v - de_casteljau(&dk, t)[0]).abs() < 1e-9 * (1.0 + v.abs()));
            }
        }
    }
}
