use super::RenderError;
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    /// Normalizes `dir`.
    pub fn new(origin: Vec3, dir: Vec3, t_near: f64, t_far: f64) -> Result<Self, RenderError> {
        let n = dir.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(RenderError::Ray(format!("direction must be nonzero and finite, got {dir:?}")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(RenderError::Ray("origin must be finite".into()));
        }
        if !(t_near < t_far && t_near.is_finite() && t_far.is_finite()) {
            return Err(RenderError::Ray(format!("need t_near < t_far, got {t_near}, {t_far}")));
        }
        Ok(Ray {
            origin,
            dir: dir / n,
            t_near,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + t * self.dir
    }

    pub fn length(&self) -> f64 {
        self.t_far - self.t_near
    }
}

/// Rectangular beam around a ray whose cross-section at depth `t` has width
/// `w0 + w_rate (t - t_near)` along `n_x` and height `h0 + h_rate (t - t_near)`
/// along `n_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    pub ray: Ray,
    pub n_x: Vec3,
    pub n_y: Vec3,
    pub w0: f64,
    pub h0: f64,
    pub w_rate: f64,
    pub h_rate: f64,
}

impl Frustum {
    /// Picks `n_x`, `n_y` completing `ray.dir` to a right-handed orthonormal basis.
    pub fn new(ray: Ray, w0: f64, h0: f64, w_rate: f64, h_rate: f64) -> Result<Self, RenderError> {
        let d = ray.dir;
        let helper = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
            Vec3::x()
        } else if d.y.abs() <= d.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let n_x = d.cross(&helper).normalize();
        let n_y = d.cross(&n_x);
        Self::with_basis(ray, n_x, n_y, w0, h0, w_rate, h_rate)
    }

    pub fn with_basis(
        ray: Ray,
        n_x: Vec3,
        n_y: Vec3,
        w0: f64,
        h0: f64,
        w_rate: f64,
        h_rate: f64,
    ) -> Result<Self, RenderError> {
        let d = ray.dir;
        let ortho = [n_x.dot(&d), n_y.dot(&d), n_x.dot(&n_y)];
        if ortho.iter().any(|v| v.abs() > 1e-12)
            || (n_x.norm() - 1.0).abs() > 1e-12
            || (n_y.norm() - 1.0).abs() > 1e-12
        {
            return Err(RenderError::Frustum("basis {d, n_x, n_y} is not orthonormal".into()));
        }
        let f = Frustum {
            ray,
            n_x,
            n_y,
            w0,
            h0,
            w_rate,
            h_rate,
        };
        let ends = [ray.t_near, ray.t_far];
        // affine profiles are positive on the interval iff positive at both ends
        if !ends.iter().all(|&t| f.width(t) > 0.0 && f.height(t) > 0.0) {
            return Err(RenderError::Frustum(format!(
                "cross-section must stay positive on [{}, {}]",
                ray.t_near, ray.t_far
            )));
        }
        Ok(f)
    }

    pub fn width(&self, t: f64) -> f64 {
        self.w0 + self.w_rate * (t - self.ray.t_near)
    }

    pub fn height(&self, t: f64) -> f64 {
        self.h0 + self.h_rate * (t - self.ray.t_near)
    }

    pub fn area(&self, t: f64) -> f64 {
        self.width(t) * self.height(t)
    }

    /// Point of the slice at depth `t` with transverse coordinates `(u, v)`,
    /// each in `[-1/2, 1/2]` of the slice extent.
    pub fn slice_point(&self, t: f64, u: f64, v: f64) -> Vec3 {
        self.ray.at(t) + u * self.width(t) * self.n_x + v * self.height(t) * self.n_y
    }
}
