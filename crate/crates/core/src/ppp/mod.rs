//! The density field read as a Poisson point process.
//!
//! With occlusion fraction `gamma` and an auxiliary particle of cross-section
//! `a_aux`, the expected number of auxiliary particles in a region `B` is
//! `(gamma / a_aux) * integral_B rho`. Collision is then a Poisson CDF question:
//! does the region hold at most `N = v_max / v_aux` particles with probability
//! at least `sigma`?

mod likelihood;
mod poisson;
mod sample;

pub use likelihood::{depth_log_likelihood, grid_resolution, line_integral, ppp_entropy};
pub use poisson::{gamma_q_int, threshold_bracket};
pub(crate) use poisson::cdf_unchecked;
pub(crate) use sample::{poisson_draw, sample_cell};
pub use sample::{
    cell_seed, sample_realization, sample_realization_with, stream_seed, PointRealization,
    SamplingMode,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldError;

#[derive(Debug, Error)]
pub enum PppError {
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("depth {depth} outside [{t_near}, {t_far}]")]
    DepthOutOfRange { depth: f64, t_near: f64, t_far: f64 },
    #[error("impossible depth {depth}: density is zero there, log-likelihood is -inf")]
    ImpossibleDepth { depth: f64 },
    #[error("degenerate region")]
    DegenerateRegion,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Parameters linking density to intensity and to the chance constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PppConfig {
    /// Occlusion fraction, `0 < gamma <= 1`.
    pub gamma: f64,
    /// Auxiliary particle cross-section (length^2).
    pub a_aux: f64,
    /// Ray sampling thickness (length).
    pub delta_t: f64,
    /// Allowed inter-penetration volume (length^3).
    pub v_max: f64,
    /// Required probability of staying within `v_max`.
    pub sigma: f64,
    /// Collision offset factor subtracted from `sigma` at thresholding.
    pub alpha: f64,
}

impl Default for PppConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            a_aux: 1e-8,
            delta_t: 0.02,
            v_max: 1e-6,
            sigma: 0.95,
            alpha: 0.0,
        }
    }
}

impl PppConfig {
    pub fn v_aux(&self) -> f64 {
        self.a_aux * self.delta_t
    }

    /// Largest admissible auxiliary particle count, `v_max / v_aux` (not floored).
    pub fn n_aux_max(&self) -> f64 {
        self.v_max / self.v_aux()
    }

    /// CDF level a position must reach to be safe, `sigma - alpha`.
    pub fn level(&self) -> f64 {
        self.sigma - self.alpha
    }

    /// Scale from `integral rho` to expected auxiliary particle count.
    pub fn intensity_scale(&self) -> f64 {
        self.gamma / self.a_aux
    }

    pub fn validate(&self) -> Result<(), PppError> {
        let err = |m: String| Err(PppError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        for (name, v) in [
            ("a_aux", self.a_aux),
            ("delta_t", self.delta_t),
            ("v_max", self.v_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return err(format!("sigma must be in (0, 1), got {}", self.sigma));
        }
        if !(self.alpha >= 0.0 && self.alpha < self.sigma) {
            return err(format!("alpha must be in [0, sigma), got {}", self.alpha));
        }
        if !(self.v_aux() < self.v_max) {
            return err(format!(
                "auxiliary volume {} must be smaller than v_max {}",
                self.v_aux(),
                self.v_max
            ));
        }
        Ok(())
    }
}

/// Expected point count `Lambda(B)` over some region.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct IntensityMeasure(f64);

impl IntensityMeasure {
    pub fn new(value: f64) -> Result<Self, PppError> {
        if value >= 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(PppError::Negative {
                name: "intensity",
                value,
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `Lambda = (gamma / a_aux) * integral rho`.
pub fn intensity_from_density(
    rho_integral: f64,
    cfg: &PppConfig,
) -> Result<IntensityMeasure, PppError> {
    if !(rho_integral >= 0.0) || !rho_integral.is_finite() {
        return Err(PppError::Negative {
            name: "density integral",
            value: rho_integral,
        });
    }
    IntensityMeasure::new(cfg.intensity_scale() * rho_integral)
}

/// Probability that the region holds no points.
pub fn void_probability(lambda: IntensityMeasure) -> f64 {
    (-lambda.0).exp()
}

/// Expected count of particles of volume `v_d` carrying the same expected
/// occupied volume as `lambda_ref` particles of volume `v_ref`.
pub fn reweighted_expected_count(
    lambda_ref: IntensityMeasure,
    v_ref: f64,
    v_d: f64,
) -> Result<f64, PppError> {
    for (name, v) in [("v_ref", v_ref), ("v_d", v_d)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(PppError::Config(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(lambda_ref.0 * v_ref / v_d)
}

/// `Pr(X <= floor(n_max))` for `X ~ Poisson(lambda)`.
pub fn poisson_cdf(n_max: f64, lambda: IntensityMeasure) -> Result<f64, PppError> {
    if !(n_max >= 0.0) || !n_max.is_finite() {
        return Err(PppError::Negative {
            name: "n_max",
            value: n_max,
        });
    }
    Ok(poisson::cdf_unchecked(n_max, lambda.0))
}

/// Chance constraint: `Pr(X <= N_aux_max; Lambda_B) >= sigma - alpha`.
pub fn collision_probability_safe(lambda_b: IntensityMeasure, cfg: &PppConfig) -> bool {
    poisson::cdf_unchecked(cfg.n_aux_max(), lambda_b.0) >= cfg.level()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn im(v: f64) -> IntensityMeasure {
        IntensityMeasure::new(v).unwrap()
    }

    fn cfg_with_n(n: f64) -> PppConfig {
        let base = PppConfig::default();
        PppConfig {
            v_max: n * base.v_aux(),
            ..base
        }
    }

    #[test]
    fn defaults_are_valid() {
        let c = PppConfig::default();
        c.validate().unwrap();
        assert!((c.v_aux() - 2e-10).abs() < 1e-24);
        assert!((c.n_aux_max() - 5000.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        let ok = PppConfig::default();
        for bad in [
            PppConfig { gamma: 0.0, ..ok },
            PppConfig { gamma: 1.5, ..ok },
            PppConfig { a_aux: 0.0, ..ok },
            PppConfig { sigma: 1.0, ..ok },
            PppConfig { alpha: 0.95, ..ok },
            PppConfig { alpha: -0.1, ..ok },
            PppConfig { v_max: 1e-10, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn intensity_conversion() {
        let c = PppConfig::default();
        assert_eq!(intensity_from_density(0.0, &c).unwrap().value(), 0.0);
        let lam = intensity_from_density(1e-6, &c).unwrap().value();
        assert!((lam - 100.0).abs() < 1e-9);
        let half = PppConfig { gamma: 0.5, ..c };
        let lam_half = intensity_from_density(1e-6, &half).unwrap().value();
        assert!((lam_half - 50.0).abs() < 1e-9);
        assert!(intensity_from_density(-1.0, &c).is_err());
        assert!(intensity_from_density(f64::NAN, &c).is_err());
    }

    #[test]
    fn void_probabilities() {
        assert_eq!(void_probability(im(0.0)), 1.0);
        assert!((void_probability(im(2f64.ln())) - 0.5).abs() < 1e-15);
        let v: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|&l| void_probability(im(l))).collect();
        assert!(v[0] > v[1] && v[1] > v[2]);
        for &l in &[0.0, 1e-3, 0.7, 13.0, 700.0] {
            assert_eq!(void_probability(im(l)), poisson_cdf(0.0, im(l)).unwrap());
            assert_eq!(void_probability(im(l)), poisson_cdf(0.99, im(l)).unwrap());
        }
    }

    #[test]
    fn reweighting() {
        assert_eq!(reweighted_expected_count(im(7.0), 2.0, 2.0).unwrap(), 7.0);
        assert_eq!(reweighted_expected_count(im(10.0), 1.0, 2.0).unwrap(), 5.0);
        assert!(reweighted_expected_count(im(1.0), 0.0, 1.0).is_err());
        assert!(reweighted_expected_count(im(1.0), 1.0, -1.0).is_err());
        // V_d * E[N_d] is conserved along a chain of reweightings.
        let v_ref = 2e-8;
        let lam = im(123.0);
        let total = v_ref * lam.value();
        let mut prev = (v_ref, lam);
        for v_d in [2e-9, 7e-8, 3e-6, 1e-7, 2e-8] {
            let n = reweighted_expected_count(prev.1, prev.0, v_d).unwrap();
            assert!((v_d * n - total).abs() <= 1e-12 * total);
            prev = (v_d, im(n));
        }
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(poisson_cdf(17.0, im(0.0)).unwrap(), 1.0);
        assert!((poisson_cdf(0.0, im(1.0)).unwrap() - (-1f64).exp()).abs() < 1e-16);
        // mpmath: gammainc(51, 38, regularized) upper
        let want = 0.974_727_839_690_762_5;
        assert!((poisson_cdf(50.0, im(38.0)).unwrap() - want).abs() < 1e-10);
        assert!(poisson_cdf(-1.0, im(1.0)).is_err());
        assert!(IntensityMeasure::new(-1.0).is_err());
    }

    #[test]
    fn cdf_floors_n_max() {
        let lam = im(4.2);
        assert_eq!(poisson_cdf(3.999, lam).unwrap(), poisson_cdf(3.0, lam).unwrap());
        assert!(poisson_cdf(4.0, lam).unwrap() > poisson_cdf(3.999, lam).unwrap());
    }

    #[test]
    fn cdf_monotone_on_log_lattice() {
        let lams: Vec<f64> = (0..20).map(|i| 10f64.powf(-2.0 + 6.0 * i as f64 / 19.0)).collect();
        let ns: Vec<f64> = (0..20).map(|i| (10f64.powf(5.0 * i as f64 / 19.0)).floor()).collect();
        for &n in &ns {
            for w in lams.windows(2) {
                assert!(poisson_cdf(n, im(w[1])).unwrap() <= poisson_cdf(n, im(w[0])).unwrap());
            }
        }
        for &l in &lams {
            for w in ns.windows(2) {
                assert!(poisson_cdf(w[1], im(l)).unwrap() >= poisson_cdf(w[0], im(l)).unwrap());
            }
        }
    }

    #[test]
    fn cdf_handles_huge_arguments() {
        let tail = poisson_cdf(50.0, im(1e6)).unwrap();
        assert_eq!(tail, 0.0);
        let mid = poisson_cdf(1e6, im(1e6)).unwrap();
        // mpmath, 40 digits
        assert!((mid - 0.500_265_961_486_283_6).abs() < 1e-12, "{mid}");
        assert!(poisson_cdf(1e6, im(1e3)).unwrap() == 1.0);
    }

    #[test]
    fn safety_decision() {
        let c = cfg_with_n(50.0);
        c.validate().unwrap();
        assert!(collision_probability_safe(im(0.0), &c));
        assert!(!collision_probability_safe(im(1e6), &c));
        let (lo, hi) = threshold_bracket(c.n_aux_max(), c.level()).unwrap();
        assert!(collision_probability_safe(im(lo), &c));
        assert!(!collision_probability_safe(im(hi), &c));
        // alpha inflates the constraint: positions at the sigma boundary turn safe
        let relaxed = PppConfig { alpha: 0.01, ..c };
        let (_, hi_relaxed) = threshold_bracket(relaxed.n_aux_max(), relaxed.level()).unwrap();
        assert!(hi_relaxed > hi);
        assert!(collision_probability_safe(im(hi), &relaxed));
    }
}
