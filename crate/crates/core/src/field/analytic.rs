use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DensityField, DensityGrid, FieldError};
use crate::geom::{Aabb, Vec3};

/// One analytic density primitive. Contributions of overlapping primitives add.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Solid ball of constant density.
    Sphere {
        center: [f64; 3],
        radius: f64,
        density: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<[f64; 3]>,
    },
    /// Solid axis-aligned box of constant density.
    Box {
        min: [f64; 3],
        max: [f64; 3],
        density: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<[f64; 3]>,
    },
    /// Isotropic Gaussian blob `peak * exp(-|x - c|^2 / (2 sigma^2))`.
    Gaussian {
        center: [f64; 3],
        sigma: f64,
        peak: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<[f64; 3]>,
    },
}

impl Primitive {
    pub fn density_at(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Sphere {
                center,
                radius,
                density,
                ..
            } => {
                if (p - Vec3::from(*center)).norm_squared() <= radius * radius {
                    *density
                } else {
                    0.0
                }
            }
            Primitive::Box {
                min, max, density, ..
            } => {
                if Aabb::new(*min, *max).contains(p) {
                    *density
                } else {
                    0.0
                }
            }
            Primitive::Gaussian {
                center,
                sigma,
                peak,
                ..
            } => {
                let r2 = (p - Vec3::from(*center)).norm_squared();
                peak * (-r2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// Exact signed distance for solid primitives; `None` for Gaussians,
    /// which have no surface.
    pub fn signed_distance(&self, p: &Vec3) -> Option<f64> {
        match self {
            Primitive::Sphere { center, radius, .. } => {
                Some((p - Vec3::from(*center)).norm() - radius)
            }
            Primitive::Box { min, max, .. } => {
                let c = (Vec3::from(*min) + Vec3::from(*max)) * 0.5;
                let half = (Vec3::from(*max) - Vec3::from(*min)) * 0.5;
                let q = (p - c).abs() - half;
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                Some(outside + inside)
            }
            Primitive::Gaussian { .. } => None,
        }
    }

    pub fn color(&self) -> Option<[f64; 3]> {
        match self {
            Primitive::Sphere { color, .. }
            | Primitive::Box { color, .. }
            | Primitive::Gaussian { color, .. } => *color,
        }
    }

    fn validate(&self) -> Result<(), FieldError> {
        let bad = |m: &str| Err(FieldError::Scene(m.to_string()));
        let ok_color = |c: &Option<[f64; 3]>| {
            c.is_none_or(|c| c.iter().all(|v| (0.0..=1.0).contains(v)))
        };
        match self {
            Primitive::Sphere {
                radius,
                density,
                color,
                ..
            } => {
                if !(*radius >= 0.0) || !(*density >= 0.0) || !density.is_finite() {
                    return bad("sphere needs radius >= 0 and finite density >= 0");
                }
                if !ok_color(color) {
                    return bad("colors must lie in [0, 1]");
                }
            }
            Primitive::Box {
                min,
                max,
                density,
                color,
            } => {
                if (0..3).any(|a| !(max[a] >= min[a])) || !(*density >= 0.0) || !density.is_finite() {
                    return bad("box needs max >= min and finite density >= 0");
                }
                if !ok_color(color) {
                    return bad("colors must lie in [0, 1]");
                }
            }
            Primitive::Gaussian {
                sigma, peak, color, ..
            } => {
                if !(*sigma > 0.0) || !(*peak >= 0.0) || !peak.is_finite() {
                    return bad("gaussian needs sigma > 0 and finite peak >= 0");
                }
                if !ok_color(color) {
                    return bad("colors must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }
}

/// Synthetic density scene: background plus a list of primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AnalyticScene {
    #[serde(default)]
    pub background: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_color: Option<[f64; 3]>,
    #[serde(default)]
    pub primitives: Vec<Primitive>,
}

impl AnalyticScene {
    pub fn new(background: f64, primitives: Vec<Primitive>) -> Result<Self, FieldError> {
        let s = Self {
            background,
            background_color: None,
            primitives,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.background >= 0.0) || !self.background.is_finite() {
            return Err(FieldError::Scene("background density must be finite and >= 0".into()));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FieldError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn eval(&self, p: &Vec3) -> f64 {
        self.background + self.primitives.iter().map(|q| q.density_at(p)).sum::<f64>()
    }

    /// Density-weighted blend of primitive colors; background color (black by
    /// default) where no primitive contributes.
    pub fn color_at(&self, p: &Vec3) -> [f64; 3] {
        let bg = self.background_color.unwrap_or([0.0; 3]);
        let mut acc = [0.0; 3];
        let mut w = 0.0;
        for q in &self.primitives {
            let d = q.density_at(p);
            if d > 0.0 {
                let c = q.color().unwrap_or(bg);
                for a in 0..3 {
                    acc[a] += d * c[a];
                }
                w += d;
            }
        }
        if self.background > 0.0 {
            for a in 0..3 {
                acc[a] += self.background * bg[a];
            }
            w += self.background;
        }
        if w > 0.0 {
            acc.map(|c| (c / w).clamp(0.0, 1.0))
        } else {
            bg
        }
    }

    /// Minimum signed distance over solid primitives, `None` when there are none.
    pub fn signed_distance(&self, p: &Vec3) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|q| q.signed_distance(p))
            .reduce(f64::min)
    }

    /// Samples the scene at every vertex of a `dims` lattice over `bbox`.
    pub fn sample(&self, dims: [usize; 3], bbox: Aabb) -> Result<DensityGrid, FieldError> {
        DensityGrid::from_fn(dims, bbox, |p| self.eval(p))
    }
}

impl DensityField for AnalyticScene {
    fn density(&self, p: &Vec3) -> Result<f64, FieldError> {
        Ok(self.eval(p))
    }
}
