//! Poisson CDF through the regularized upper incomplete gamma function.
//!
//! `Pr(X <= n; lambda) = Q(n + 1, lambda)`. The prefactor
//! `x^a e^-x / Gamma(a)` is evaluated as
//! `exp(a * log1pmx((x - a) / a)) * sqrt(a / 2pi) / Gamma*(a)` so that
//! large `a` and `x` (up to ~1e6) do not lose digits to cancellation.

use std::f64::consts::PI;

/// `ln(1 + t) - t`, accurate for small `|t|`.
fn log1pmx(t: f64) -> f64 {
    if t.abs() < 0.125 {
        // -t^2/2 + t^3/3 - t^4/4 + ...
        let mut term = t;
        let mut sum = 0.0;
        for k in 2..60 {
            term *= -t;
            let add = term / k as f64;
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        t.ln_1p() - t
    }
}

/// `ln Gamma*(a)` where `Gamma(a) = sqrt(2pi/a) (a/e)^a Gamma*(a)`, for integer `a >= 1`.
fn ln_gamma_star_int(a: u64) -> f64 {
    let af = a as f64;
    if a < 20 {
        let mut ln_fact = 0.0;
        for k in 2..a {
            ln_fact += (k as f64).ln();
        }
        ln_fact - ((af - 0.5) * af.ln() - af + 0.5 * (2.0 * PI).ln())
    } else {
        let r = 1.0 / af;
        let r2 = r * r;
        r * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 * (1.0 / 1188.0)))))
    }
}

/// `x^a e^-x / Gamma(a)` for integer `a`.
fn prefactor(a: u64, x: f64) -> f64 {
    let af = a as f64;
    let t = (x - af) / af;
    (af * log1pmx(t) + 0.5 * (af / (2.0 * PI)).ln() - ln_gamma_star_int(a)).exp()
}

fn max_iter(a: f64, x: f64) -> usize {
    10_000 + (50.0 * (a.max(x)).sqrt()) as usize
}

/// Lower regularized P(a, x) by its power series (use when `x < a + 1`).
fn series_p(a: u64, x: f64) -> f64 {
    let af = a as f64;
    let mut ap = af;
    let mut term = 1.0 / af;
    let mut sum = term;
    for _ in 0..max_iter(af, x) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    (sum * prefactor(a, x)).min(1.0)
}

/// Upper regularized Q(a, x) by modified Lentz continued fraction (use when
/// `x >= a + 1`).
fn cf_q(a: u64, x: f64) -> f64 {
    let af = a as f64;
    let tiny = 1e-300;
    let mut b = x + 1.0 - af;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..max_iter(af, x) {
        let fi = i as f64;
        let an = -fi * (fi - af);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (h * prefactor(a, x)).clamp(0.0, 1.0)
}

/// Regularized upper incomplete gamma `Q(a, x)` for integer `a >= 1`, `x >= 0`.
pub fn gamma_q_int(a: u64, x: f64) -> f64 {
    debug_assert!(a >= 1 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a as f64 + 1.0 {
        1.0 - series_p(a, x)
    } else {
        cf_q(a, x)
    }
}

/// `e^-lambda * sum_{i=0}^{floor(n_max)} lambda^i / i!` without checks.
/// `n_max` is floored, never rounded.
pub(crate) fn cdf_unchecked(n_max: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let k = n_max.floor() as u64;
    if k == 0 {
        return (-lambda).exp();
    }
    gamma_q_int(k + 1, lambda)
}

/// Smallest-known bracket `[lo, hi]` around the intensity where the CDF at
/// `n_max` crosses `level`: `cdf(lo) >= level` and `cdf(hi) < level`.
///
/// Returns `None` when `level <= 0` (everything is safe).
pub fn threshold_bracket(n_max: f64, level: f64) -> Option<(f64, f64)> {
    if level <= 0.0 {
        return None;
    }
    let mut lo = 0.0;
    let mut hi = n_max.floor().max(1.0) + 1.0;
    while cdf_unchecked(n_max, hi) >= level {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf_unchecked(n_max, mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo, hi))
}
