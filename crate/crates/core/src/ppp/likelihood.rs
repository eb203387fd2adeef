use super::PppError;
use crate::field::{DensityField, DensityGrid};
use crate::geom::Aabb;
use crate::render::Ray;

/// `integral_{t0}^{t1} rho(r(t)) dt` by composite Simpson with intervals no
/// longer than `step`.
pub fn line_integral(
    ray: &Ray,
    field: &dyn DensityField,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<f64, PppError> {
    if !(step > 0.0) {
        return Err(PppError::Config(format!("quadrature step must be positive, got {step}")));
    }
    let len = t1 - t0;
    if len <= 0.0 {
        return Ok(0.0);
    }
    let mut n = (len / step).ceil().max(1.0) as usize;
    if n % 2 == 1 {
        n += 1;
    }
    let h = len / n as f64;
    let mut sum = field.density(&ray.at(t0))? + field.density(&ray.at(t1))?;
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * field.density(&ray.at(t0 + i as f64 * h))?;
    }
    Ok(sum * h / 3.0)
}

/// Log-likelihood of noiseless depth returns along `ray`:
/// `sum_i [ln rho(r(d_i)) - integral_{t_near}^{d_i} rho(r(t)) dt]`.
pub fn depth_log_likelihood(
    ray: &Ray,
    depths: &[f64],
    field: &dyn DensityField,
    step: f64,
) -> Result<f64, PppError> {
    let mut total = 0.0;
    for &d in depths {
        if !(d >= ray.t_near && d <= ray.t_far) {
            return Err(PppError::DepthOutOfRange {
                depth: d,
                t_near: ray.t_near,
                t_far: ray.t_far,
            });
        }
        let rho = field.density(&ray.at(d))?;
        if rho <= 0.0 {
            return Err(PppError::ImpossibleDepth { depth: d });
        }
        total += rho.ln() - line_integral(ray, field, ray.t_near, d, step)?;
    }
    Ok(total)
}

/// Point-process entropy `integral_B lambda (1 - ln lambda)` with
/// `lambda = gamma rho / a_ref`, by the midpoint rule on a
/// `resolution[0] x resolution[1] x resolution[2]` lattice of sub-boxes.
///
/// The absolute value depends on the unknown reference area `a_ref`;
/// compare entropies only at a fixed `a_ref`.
pub fn ppp_entropy(
    region: &Aabb,
    field: &dyn DensityField,
    gamma: f64,
    a_ref: f64,
    resolution: [usize; 3],
) -> Result<f64, PppError> {
    if !region.is_proper() || resolution.contains(&0) {
        return Err(PppError::DegenerateRegion);
    }
    if !(gamma > 0.0) || !(a_ref > 0.0) {
        return Err(PppError::Config("gamma and a_ref must be positive".into()));
    }
    let ext = region.extent();
    let h: [f64; 3] = std::array::from_fn(|a| ext[a] / resolution[a] as f64);
    let dv = h[0] * h[1] * h[2];
    let scale = gamma / a_ref;
    let mut sum = 0.0;
    for k in 0..resolution[2] {
        for j in 0..resolution[1] {
            for i in 0..resolution[0] {
                let p = region.min_v()
                    + crate::geom::Vec3::new(
                        (i as f64 + 0.5) * h[0],
                        (j as f64 + 0.5) * h[1],
                        (k as f64 + 0.5) * h[2],
                    );
                let lam = scale * field.density(&p)?;
                if lam > 0.0 {
                    sum += lam * (1.0 - lam.ln());
                }
            }
        }
    }
    Ok(sum * dv)
}

/// Number of grid cells spanned by `region` along each axis (at least one).
pub fn grid_resolution(grid: &DensityGrid, region: &Aabb) -> [usize; 3] {
    let h = grid.spacing();
    std::array::from_fn(|a| (((region.max[a] - region.min[a]) / h[a]).round() as usize).max(1))
}
