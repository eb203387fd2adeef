//! Scalar density fields: sampled lattices and analytic scenes.

mod analytic;
mod grid;
mod trilinear;

pub use analytic::{AnalyticScene, Primitive};
pub use grid::{DensityGrid, GridDtype, GridHeader};
pub(crate) use grid::trilerp;
pub use trilinear::TrilinearCellCoeffs;

use crate::geom::Vec3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("malformed grid header: {0}")]
    Header(String),
    #[error("value count mismatch: header declares {expected} values, file holds {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("negative density {value} at value #{index} (byte offset {offset})")]
    Negative {
        index: usize,
        offset: usize,
        value: f64,
    },
    #[error("non-finite density {value} at value #{index} (byte offset {offset})")]
    NonFinite {
        index: usize,
        offset: usize,
        value: f64,
    },
    #[error("invalid dims {0:?}: every axis needs at least 2 vertices")]
    Dims([usize; 3]),
    #[error("degenerate bounding box {min:?}..{max:?}")]
    DegenerateBox { min: [f64; 3], max: [f64; 3] },
    #[error("point ({x}, {y}, {z}) lies outside the field bounds")]
    OutOfBounds { x: f64, y: f64, z: f64 },
    #[error("cell index {cell:?} out of range for {cells:?} cells")]
    CellIndex { cell: [usize; 3], cells: [usize; 3] },
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FieldError {
    pub(crate) fn out_of_bounds(p: &Vec3) -> Self {
        FieldError::OutOfBounds {
            x: p.x,
            y: p.y,
            z: p.z,
        }
    }
}

/// Anything that can report a non-negative density at a world position.
pub trait DensityField: Sync {
    fn density(&self, p: &Vec3) -> Result<f64, FieldError>;
}

/// Adapts a plain closure into a [`DensityField`] defined everywhere.
pub struct FnField<F>(pub F);

impl<F> DensityField for FnField<F>
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    fn density(&self, p: &Vec3) -> Result<f64, FieldError> {
        Ok((self.0)(p))
    }
}

impl<T: DensityField + ?Sized> DensityField for &T {
    fn density(&self, p: &Vec3) -> Result<f64, FieldError> {
        (**self).density(p)
    }
}
