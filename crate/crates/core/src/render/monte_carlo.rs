use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{check_step, partition, ColorField, Frustum, RenderError};
use crate::exec::Exec;
use crate::field::DensityField;
use crate::ppp::stream_seed;

const CHUNK: usize = 4096;

/// Occlusion rate of the frustum slice at depth `t`.
pub trait Kappa: Sync {
    fn kappa(&self, frustum: &Frustum, t: f64) -> Result<f64, RenderError>;
}

/// `kappa(t) = rho(r(t))` on the central ray.
pub struct DensityKappa<'a>(pub &'a dyn DensityField);

impl Kappa for DensityKappa<'_> {
    fn kappa(&self, frustum: &Frustum, t: f64) -> Result<f64, RenderError> {
        Ok(self.0.density(&frustum.ray.at(t))?)
    }
}

/// `kappa(t) = (a_ref / gamma) * mean of lambda over the slice at t`, with the
/// mean taken on a `transverse x transverse` midpoint grid.
pub struct AreaAveragedKappa<'a> {
    pub intensity: &'a dyn DensityField,
    pub a_ref: f64,
    pub gamma: f64,
    pub transverse: usize,
}

impl Kappa for AreaAveragedKappa<'_> {
    fn kappa(&self, frustum: &Frustum, t: f64) -> Result<f64, RenderError> {
        if !(self.gamma > 0.0 && self.a_ref > 0.0) {
            return Err(RenderError::Config("gamma and a_ref must be positive".into()));
        }
        let n = self.transverse.max(1);
        let mut sum = 0.0;
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64 - 0.5;
            for j in 0..n {
                let v = (j as f64 + 0.5) / n as f64 - 0.5;
                sum += self.intensity.density(&frustum.slice_point(t, u, v))?;
            }
        }
        Ok(self.a_ref / self.gamma * sum / (n * n) as f64)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Depth resolution of the cumulative `kappa` table.
    pub step: f64,
    pub background: [f64; 3],
    pub exec: Exec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McRender {
    pub mean: [f64; 3],
    pub std_err: [f64; 3],
    pub n_samples: usize,
    pub unoccluded_fraction: f64,
    /// `1 - exp(-integral kappa)` from the table, the exact occlusion probability.
    pub occlusion_probability: f64,
}

/// Monte Carlo pixel color from first-occlusion depth sampling.
///
/// `integral kappa` is tabulated with the midpoint rule on a uniform depth
/// partition and inverted exactly on that piecewise-constant `kappa`. The
/// color is read on the central ray at the sampled depth; rays that pass
/// `t_far` take `background`.
pub fn render_ppp_monte_carlo(
    frustum: &Frustum,
    kappa: &dyn Kappa,
    color: &dyn ColorField,
    cfg: &McConfig,
) -> Result<McRender, RenderError> {
    check_step(cfg.step)?;
    if cfg.n_samples == 0 {
        return Err(RenderError::Config("n_samples must be at least 1".into()));
    }
    let ray = &frustum.ray;
    let (n, h) = partition(ray.t_near, ray.t_far, cfg.step);
    let mut rates = Vec::with_capacity(n);
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        let k = kappa.kappa(frustum, ray.t_near + (i as f64 + 0.5) * h)?;
        if !(k >= 0.0 && k.is_finite()) {
            return Err(RenderError::Config(format!("kappa must be finite and non-negative, got {k}")));
        }
        rates.push(k);
        cum.push(cum[i] + k * h);
    }
    let total = cum[n];
    let bg = cfg.background;

    let chunks = cfg.n_samples.div_ceil(CHUNK);
    // sums are taken relative to the background so an empty scene is exact
    let parts = cfg.exec.map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, c as u64, 0));
        let count = CHUNK.min(cfg.n_samples - c * CHUNK);
        let mut s1 = [0.0; 3];
        let mut s2 = [0.0; 3];
        let mut free = 0usize;
        for _ in 0..count {
            let e = -(1.0 - rng.random::<f64>()).ln();
            if e >= total {
                free += 1;
                continue;
            }
            let i = cum.partition_point(|&k| k <= e) - 1;
            let t = ray.t_near + i as f64 * h + (e - cum[i]) / rates[i];
            let col = color.color(&ray.at(t), &ray.dir);
            for k in 0..3 {
                let d = col[k] - bg[k];
                s1[k] += d;
                s2[k] += d * d;
            }
        }
        (s1, s2, free)
    });

    let mut s1 = [0.0; 3];
    let mut s2 = [0.0; 3];
    let mut free = 0;
    for (a, b, f) in parts {
        for k in 0..3 {
            s1[k] += a[k];
            s2[k] += b[k];
        }
        free += f;
    }
    let m = cfg.n_samples as f64;
    let mut mean = [0.0; 3];
    let mut std_err = [0.0; 3];
    for k in 0..3 {
        let mu = s1[k] / m;
        mean[k] = bg[k] + mu;
        if cfg.n_samples > 1 {
            let var = ((s2[k] - m * mu * mu) / (m - 1.0)).max(0.0);
            std_err[k] = (var / m).sqrt();
        }
    }
    Ok(McRender {
        mean,
        std_err,
        n_samples: cfg.n_samples,
        unoccluded_fraction: free as f64 / m,
        occlusion_probability: 1.0 - (-total).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::geom::Vec3;
    use crate::render::{render_quadrature, ConstantColor, FnColor, Ray};

    fn frustum() -> Frustum {
        let r = Ray::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), 0.0, 3.0).unwrap();
        Frustum::new(r, 0.2, 0.2, 0.0, 0.0).unwrap()
    }

    fn cfg(n: usize, seed: u64) -> McConfig {
        McConfig {
            n_samples: n,
            seed,
            step: 1e-3,
            background: [0.1, 0.7, 0.3],
            exec: Exec::default(),
        }
    }

    #[test]
    fn empty_scene_returns_background_exactly() {
        let zero = FnField(|_: &Vec3| 0.0);
        let r = render_ppp_monte_carlo(&frustum(), &DensityKappa(&zero), &ConstantColor([1.0; 3]), &cfg(5000, 1)).unwrap();
        assert_eq!(r.mean, [0.1, 0.7, 0.3]);
        assert_eq!(r.std_err, [0.0; 3]);
        assert_eq!(r.unoccluded_fraction, 1.0);
    }

    #[test]
    fn constant_medium_matches_quadrature() {
        let rho = FnField(|_: &Vec3| 0.4);
        let color = FnColor(|p: &Vec3| [0.2 + 0.2 * p.z, 0.5, 0.9 - 0.1 * p.z]);
        let f = frustum();
        let c = cfg(100_000, 7);
        let mc = render_ppp_monte_carlo(&f, &DensityKappa(&rho), &color, &c).unwrap();
        let q = render_quadrature(&f.ray, &rho, &color, 1e-3).unwrap();
        let expect = q.composite(c.background);
        for k in 0..3 {
            assert!((mc.mean[k] - expect[k]).abs() <= 3.0 * mc.std_err[k] + 1e-6, "{k}: {mc:?} {expect:?}");
        }
    }

    #[test]
    fn area_average_equals_density_of_mean() {
        // lambda varies across the beam but its slice average is constant in x
        let gamma = 2.0;
        let a_ref = 0.5;
        let lam = FnField(move |p: &Vec3| gamma / a_ref * (0.5 + 2.0 * p.x + 3.0 * p.y * p.y));
        let f = frustum();
        let k = AreaAveragedKappa {
            intensity: &lam,
            a_ref,
            gamma,
            transverse: 8,
        };
        let n = 8.0f64;
        // midpoint rule on y^2 over [-0.1, 0.1]: 0.04 * (1 - 1/n^2) / 12
        let expect = 0.5 + 3.0 * 0.04 * (1.0 - 1.0 / (n * n)) / 12.0;
        assert!((k.kappa(&f, 1.0).unwrap() - expect).abs() < 1e-12);
        let avg = FnField(move |_: &Vec3| expect);
        let color = ConstantColor([0.8, 0.2, 0.4]);
        let c = cfg(100_000, 3);
        let mc = render_ppp_monte_carlo(&f, &k, &color, &c).unwrap();
        let q = render_quadrature(&f.ray, &avg, &color, 1e-3).unwrap().composite(c.background);
        for ch in 0..3 {
            assert!((mc.mean[ch] - q[ch]).abs() <= 3.0 * mc.std_err[ch] + 1e-9);
        }
    }

    #[test]
    fn schedule_independent() {
        let rho = FnField(|p: &Vec3| 0.3 + 0.2 * p.z);
        let color = FnColor(|p: &Vec3| [p.z / 3.0, 0.5, 0.5]);
        let f = frustum();
        let mut c = cfg(20_000, 11);
        c.exec = Exec::Sequential;
        let a = render_ppp_monte_carlo(&f, &DensityKappa(&rho), &color, &c).unwrap();
        c.exec = Exec::Parallel;
        let b = render_ppp_monte_carlo(&f, &DensityKappa(&rho), &color, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_zero_samples() {
        let rho = FnField(|_: &Vec3| 1.0);
        assert!(render_ppp_monte_carlo(&frustum(), &DensityKappa(&rho), &ConstantColor([0.0; 3]), &cfg(0, 0)).is_err());
    }
}
