//! Volumetric rendering two ways: quadrature of the rendering integral, and
//! Monte Carlo over the first occluding slice of a point-process frustum.
//!
//! Both consume the same per-depth occlusion rate `kappa(t)`. For a density
//! field `kappa = rho(r(t))`; for a raw intensity field it is the
//! cross-section average `(a_ref / gamma) * mean_{A(t)} lambda`.

mod frustum;
mod monte_carlo;

pub use frustum::{Frustum, Ray};
pub use monte_carlo::{render_ppp_monte_carlo, AreaAveragedKappa, DensityKappa, Kappa, McConfig, McRender};

use serde::Serialize;
use thiserror::Error;

use crate::field::{AnalyticScene, DensityField, FieldError};
use crate::geom::Vec3;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid ray: {0}")]
    Ray(String),
    #[error("invalid frustum: {0}")]
    Frustum(String),
    #[error("depth {t} outside [{t_near}, {t_far}]")]
    OutOfRange { t: f64, t_near: f64, t_far: f64 },
    #[error("invalid parameter: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Emitted color as a function of position and viewing direction, in `[0, 1]^3`.
pub trait ColorField: Sync {
    fn color(&self, p: &Vec3, dir: &Vec3) -> [f64; 3];
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantColor(pub [f64; 3]);

impl ColorField for ConstantColor {
    fn color(&self, _: &Vec3, _: &Vec3) -> [f64; 3] {
        self.0
    }
}

pub struct FnColor<F>(pub F);

impl<F> ColorField for FnColor<F>
where
    F: Fn(&Vec3) -> [f64; 3] + Sync,
{
    fn color(&self, p: &Vec3, _: &Vec3) -> [f64; 3] {
        (self.0)(p)
    }
}

impl ColorField for AnalyticScene {
    fn color(&self, p: &Vec3, _: &Vec3) -> [f64; 3] {
        self.color_at(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureRender {
    /// Expected color, excluding any background.
    pub color: [f64; 3],
    /// Transmittance at `t_far`.
    pub transmittance: f64,
}

impl QuadratureRender {
    pub fn opacity(&self) -> f64 {
        1.0 - self.transmittance
    }

    /// Color with `background` showing through the residual transmittance.
    pub fn composite(&self, background: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|c| self.color[c] + self.transmittance * background[c])
    }
}

fn check_step(step: f64) -> Result<(), RenderError> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(RenderError::Config(format!("step must be positive, got {step}")))
    }
}

/// Uniform partition of `[t0, t1]` into intervals no longer than `step`.
fn partition(t0: f64, t1: f64, step: f64) -> (usize, f64) {
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    (n, (t1 - t0) / n as f64)
}

/// Composite-midpoint optical depth `integral_{t_near}^{t} rho(r(s)) ds`.
pub fn optical_depth(
    ray: &Ray,
    density: &dyn DensityField,
    t: f64,
    step: f64,
) -> Result<f64, RenderError> {
    check_step(step)?;
    if t <= ray.t_near {
        return Ok(0.0);
    }
    let (n, h) = partition(ray.t_near, t, step);
    let mut sum = 0.0;
    for i in 0..n {
        sum += density.density(&ray.at(ray.t_near + (i as f64 + 0.5) * h))?;
    }
    Ok(sum * h)
}

/// Composite-midpoint evaluation of
/// `C = integral rho(r(t)) exp(-integral_{t_n}^t rho) c(r(t)) dt` over the ray.
///
/// Each interval is composited with opacity `1 - exp(-rho_mid h)`, which is
/// exact when density and color are constant on the interval.
pub fn render_quadrature(
    ray: &Ray,
    density: &dyn DensityField,
    color: &dyn ColorField,
    step: f64,
) -> Result<QuadratureRender, RenderError> {
    check_step(step)?;
    let (n, h) = partition(ray.t_near, ray.t_far, step);
    let mut trans = 1.0;
    let mut acc = [0.0; 3];
    for i in 0..n {
        let p = ray.at(ray.t_near + (i as f64 + 0.5) * h);
        let rho = density.density(&p)?;
        if rho <= 0.0 {
            continue;
        }
        let decay = (-rho * h).exp();
        let w = trans * (1.0 - decay);
        let c = color.color(&p, &ray.dir);
        for k in 0..3 {
            acc[k] += w * c[k];
        }
        trans *= decay;
    }
    Ok(QuadratureRender {
        color: acc,
        transmittance: trans,
    })
}

/// CDF and PDF of the first-occlusion depth at `t`:
/// `F = 1 - exp(-integral kappa)`, `f = kappa(t) exp(-integral kappa)` with
/// `kappa = rho` along the ray.
pub fn depth_distribution(
    ray: &Ray,
    density: &dyn DensityField,
    t: f64,
    step: f64,
) -> Result<(f64, f64), RenderError> {
    if !(t >= ray.t_near && t <= ray.t_far) {
        return Err(RenderError::OutOfRange {
            t,
            t_near: ray.t_near,
            t_far: ray.t_far,
        });
    }
    let tau = optical_depth(ray, density, t, step)?;
    let surv = (-tau).exp();
    let rho = density.density(&ray.at(t))?;
    Ok((1.0 - surv, rho * surv))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthRow {
    pub t: f64,
    pub cdf: f64,
    pub pdf: f64,
    pub transmittance: f64,
}

/// `n_points` evenly spaced depth rows from `t_near` to `t_far`.
pub fn depth_profile(
    ray: &Ray,
    density: &dyn DensityField,
    n_points: usize,
    step: f64,
) -> Result<Vec<DepthRow>, RenderError> {
    let n = n_points.max(2);
    (0..n)
        .map(|i| {
            let t = ray.t_near + (ray.t_far - ray.t_near) * i as f64 / (n - 1) as f64;
            let (cdf, pdf) = depth_distribution(ray, density, t, step)?;
            Ok(DepthRow {
                t,
                cdf,
                pdf,
                transmittance: 1.0 - cdf,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, Primitive};

    fn ray() -> Ray {
        Ray::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), 0.0, 3.0).unwrap()
    }

    #[test]
    fn empty_scene_is_black_and_clear() {
        let r = render_quadrature(&ray(), &FnField(|_: &Vec3| 0.0), &ConstantColor([1.0; 3]), 0.01).unwrap();
        assert_eq!(r.color, [0.0; 3]);
        assert_eq!(r.transmittance, 1.0);
    }

    #[test]
    fn opaque_wall_hides_the_one_behind() {
        let scene = AnalyticScene {
            background: 0.0,
            background_color: None,
            primitives: vec![
                Primitive::Box {
                    min: [-1.0, -1.0, 1.0],
                    max: [1.0, 1.0, 1.2],
                    density: 1e6,
                    color: Some([1.0, 0.0, 0.0]),
                },
                Primitive::Box {
                    min: [-1.0, -1.0, 2.0],
                    max: [1.0, 1.0, 2.2],
                    density: 1e6,
                    color: Some([0.0, 0.0, 1.0]),
                },
            ],
        };
        let r = render_quadrature(&ray(), &scene, &scene, 0.01).unwrap();
        assert!((r.color[0] - 1.0).abs() < 1e-3);
        assert!(r.color[1].abs() < 1e-3 && r.color[2].abs() < 1e-3);
    }

    #[test]
    fn constant_medium_closed_form() {
        let c = 0.8;
        let k = [0.2, 0.5, 0.9];
        let r = render_quadrature(&ray(), &FnField(move |_: &Vec3| c), &ConstantColor(k), 0.05).unwrap();
        let opacity = 1.0 - (-c * 3.0f64).exp();
        for ch in 0..3 {
            assert!((r.color[ch] - k[ch] * opacity).abs() < 1e-12);
        }
        assert!((r.transmittance - (-c * 3.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_converges_at_least_first_order() {
        let scene = AnalyticScene::new(
            0.1,
            vec![Primitive::Gaussian {
                center: [0.05, 0.0, 1.4],
                sigma: 0.3,
                peak: 3.0,
                color: Some([0.9, 0.3, 0.1]),
            }],
        )
        .unwrap();
        let color = FnColor(|p: &Vec3| [0.5 + 0.4 * (2.0 * p.z).sin(), 0.3, 0.5 + 0.2 * p.z.cos()]);
        let reference = render_quadrature(&ray(), &scene, &color, 1e-4).unwrap();
        let err = |step| {
            let r = render_quadrature(&ray(), &scene, &color, step).unwrap();
            (0..3).map(|c| (r.color[c] - reference.color[c]).abs()).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        assert!(e2 <= 0.5 * e1 * 1.05, "{e1} {e2}");
        assert!(e3 <= 0.5 * e2 * 1.05, "{e2} {e3}");
    }

    #[test]
    fn depth_law_for_constant_density() {
        let c = 1.3;
        let f = FnField(move |_: &Vec3| c);
        let r = ray();
        let (f0, _) = depth_distribution(&r, &f, 0.0, 0.01).unwrap();
        assert_eq!(f0, 0.0);
        for &t in &[0.3, 1.0, 2.9] {
            let (cdf, pdf) = depth_distribution(&r, &f, t, 0.01).unwrap();
            assert!((cdf - (1.0 - (-c * t).exp())).abs() < 1e-12);
            assert!((pdf - c * (-c * t).exp()).abs() < 1e-12);
        }
        assert!(matches!(depth_distribution(&r, &f, 3.5, 0.01), Err(RenderError::OutOfRange { .. })));
    }

    #[test]
    fn pdf_integrates_to_opacity() {
        let scene = AnalyticScene::new(
            0.05,
            vec![Primitive::Gaussian {
                center: [0.0, 0.1, 1.5],
                sigma: 0.4,
                peak: 2.0,
                color: None,
            }],
        )
        .unwrap();
        let r = ray();
        let step = 2e-4;
        // Simpson over t of f(t)
        let n = 600;
        let h = 3.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * depth_distribution(&r, &scene, i as f64 * h, step).unwrap().1;
        }
        s *= h / 3.0;
        let q = render_quadrature(&r, &scene, &ConstantColor([1.0; 3]), step).unwrap();
        assert!((s - q.opacity()).abs() < 1e-6, "{s} vs {}", q.opacity());
    }

    #[test]
    fn cdf_monotone_and_consistent_with_transmittance() {
        let scene = AnalyticScene::new(
            0.0,
            vec![Primitive::Sphere {
                center: [0.0, 0.0, 1.5],
                radius: 0.5,
                density: 2.0,
                color: None,
            }],
        )
        .unwrap();
        let r = ray();
        let rows = depth_profile(&r, &scene, 61, 0.01).unwrap();
        assert_eq!(rows[0].cdf, 0.0);
        assert!(rows.windows(2).all(|w| w[1].cdf >= w[0].cdf));
        let q = render_quadrature(&r, &scene, &ConstantColor([1.0; 3]), 0.01).unwrap();
        assert!((rows.last().unwrap().cdf - q.opacity()).abs() < 1e-9);
    }
}
