use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DensityField, FieldError, TrilinearCellCoeffs};
use crate::geom::{Aabb, Vec3};

pub const GRID_MAGIC: &str = "DGRID1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GridDtype {
    #[default]
    #[serde(rename = "f32le")]
    F32Le,
    #[serde(rename = "f64le")]
    F64Le,
}

impl GridDtype {
    fn width(self) -> usize {
        match self {
            GridDtype::F32Le => 4,
            GridDtype::F64Le => 8,
        }
    }
}

/// First line of a grid file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridHeader {
    pub magic: String,
    pub dims: [usize; 3],
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    #[serde(default)]
    pub dtype: GridDtype,
}

/// Densities on the vertices of a rectilinear lattice, x-fastest.
///
/// Cells are the `(nx-1)(ny-1)(nz-1)` boxes between vertices. Values are
/// held in `f64` whatever the file precision.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    dims: [usize; 3],
    bbox: Aabb,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(dims: [usize; 3], bbox: Aabb, values: Vec<f64>) -> Result<Self, FieldError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(FieldError::Dims(dims));
        }
        if !bbox.is_proper() {
            return Err(FieldError::DegenerateBox {
                min: bbox.min,
                max: bbox.max,
            });
        }
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(FieldError::CountMismatch {
                expected,
                found: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(FieldError::NonFinite {
                    index,
                    offset: 0,
                    value,
                });
            }
            if value < 0.0 {
                return Err(FieldError::Negative {
                    index,
                    offset: 0,
                    value,
                });
            }
        }
        Ok(Self { dims, bbox, values })
    }

    pub fn constant(dims: [usize; 3], bbox: Aabb, value: f64) -> Result<Self, FieldError> {
        Self::new(dims, bbox, vec![value; dims[0] * dims[1] * dims[2]])
    }

    /// Builds a grid by evaluating `f` at every vertex.
    pub fn from_fn(
        dims: [usize; 3],
        bbox: Aabb,
        f: impl Fn(&Vec3) -> f64,
    ) -> Result<Self, FieldError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(FieldError::Dims(dims));
        }
        if !bbox.is_proper() {
            return Err(FieldError::DegenerateBox {
                min: bbox.min,
                max: bbox.max,
            });
        }
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        let h = spacing_of(dims, &bbox);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = Vec3::new(
                        bbox.min[0] + i as f64 * h[0],
                        bbox.min[1] + j as f64 * h[1],
                        bbox.min[2] + k as f64 * h[2],
                    );
                    values.push(f(&p));
                }
            }
        }
        Self::new(dims, bbox, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_dims(&self) -> [usize; 3] {
        [self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1]
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Vertex spacing (cell edge lengths).
    pub fn spacing(&self) -> [f64; 3] {
        spacing_of(self.dims, &self.bbox)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn vertex_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.spacing();
        Vec3::new(
            self.bbox.min[0] + i as f64 * h[0],
            self.bbox.min[1] + j as f64 * h[1],
            self.bbox.min[2] + k as f64 * h[2],
        )
    }

    /// World-space box of cell `(i, j, k)`.
    pub fn cell_box(&self, cell: [usize; 3]) -> Aabb {
        let lo = self.vertex_position(cell[0], cell[1], cell[2]);
        let hi = self.vertex_position(cell[0] + 1, cell[1] + 1, cell[2] + 1);
        Aabb::new(lo.into(), hi.into())
    }

    /// The eight vertex densities of a cell, x-fastest.
    pub fn cell_vertices(&self, cell: [usize; 3]) -> [f64; 8] {
        let [i, j, k] = cell;
        let base = self.index(i, j, k);
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        let v = &self.values;
        [
            v[base],
            v[base + sx],
            v[base + sy],
            v[base + sx + sy],
            v[base + sz],
            v[base + sx + sz],
            v[base + sy + sz],
            v[base + sx + sy + sz],
        ]
    }

    fn check_cell(&self, cell: [usize; 3]) -> Result<(), FieldError> {
        let cells = self.cell_dims();
        if (0..3).any(|a| cell[a] >= cells[a]) {
            return Err(FieldError::CellIndex { cell, cells });
        }
        Ok(())
    }

    /// Trilinear coefficients of a cell in local coordinates (origin at the
    /// cell's min corner).
    pub fn cell_coeffs(&self, cell: [usize; 3]) -> Result<TrilinearCellCoeffs, FieldError> {
        self.check_cell(cell)?;
        Ok(TrilinearCellCoeffs::from_vertices(
            self.spacing(),
            self.cell_vertices(cell),
        ))
    }

    /// Cell containing `p`; points on the max faces map into the last cell.
    pub fn locate(&self, p: &Vec3) -> Result<([usize; 3], [f64; 3]), FieldError> {
        if !self.bbox.contains(p) {
            return Err(FieldError::out_of_bounds(p));
        }
        let h = self.spacing();
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (p[a] - self.bbox.min[a]) / h[a];
            let c = (u.floor() as usize).min(self.dims[a] - 2);
            cell[a] = c;
            frac[a] = (u - c as f64).clamp(0.0, 1.0);
        }
        Ok((cell, frac))
    }

    /// Trilinear interpolation; no extrapolation outside the box.
    pub fn interpolate(&self, p: &Vec3) -> Result<f64, FieldError> {
        let (cell, f) = self.locate(p)?;
        let v = self.cell_vertices(cell);
        Ok(trilerp(&v, f))
    }

    /// Evaluates the interpolant of a specific cell at `p` (which should lie in
    /// or on that cell).
    pub fn interpolate_in_cell(&self, cell: [usize; 3], p: &Vec3) -> Result<f64, FieldError> {
        let coeffs = self.cell_coeffs(cell)?;
        let o = self.vertex_position(cell[0], cell[1], cell[2]);
        Ok(coeffs.eval(p.x - o.x, p.y - o.y, p.z - o.z))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, FieldError> {
        Self::new(self.dims, self.bbox, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn header(&self, dtype: GridDtype) -> GridHeader {
        GridHeader {
            magic: GRID_MAGIC.to_string(),
            dims: self.dims,
            bbox_min: self.bbox.min,
            bbox_max: self.bbox.max,
            dtype,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FieldError> {
        let f = File::open(path)?;
        Self::read_from(BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>, dtype: GridDtype) -> Result<(), FieldError> {
        let f = File::create(path)?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w, dtype)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write, dtype: GridDtype) -> Result<(), FieldError> {
        serde_json::to_writer(&mut *w, &self.header(dtype))?;
        w.write_all(b"\n")?;
        match dtype {
            GridDtype::F32Le => {
                for &v in &self.values {
                    w.write_all(&(v as f32).to_le_bytes())?;
                }
            }
            GridDtype::F64Le => {
                for &v in &self.values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl BufRead) -> Result<Self, FieldError> {
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(FieldError::Header("missing newline after header".into()));
        }
        let header_len = line.len();
        let text = std::str::from_utf8(&line[..header_len - 1])
            .map_err(|e| FieldError::Header(format!("header is not UTF-8: {e}")))?;
        let header: GridHeader = serde_json::from_str(text)
            .map_err(|e| FieldError::Header(format!("byte {}: {e}", e.column())))?;
        if header.magic != GRID_MAGIC {
            return Err(FieldError::Header(format!(
                "field \"magic\": expected {GRID_MAGIC}, found {:?}",
                header.magic
            )));
        }
        if header.dims.iter().any(|&d| d < 2) {
            return Err(FieldError::Dims(header.dims));
        }
        let bbox = Aabb::new(header.bbox_min, header.bbox_max);
        if !bbox.is_proper() {
            return Err(FieldError::DegenerateBox {
                min: bbox.min,
                max: bbox.max,
            });
        }
        let expected = header.dims.iter().product::<usize>();
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let width = header.dtype.width();
        if body.len() % width != 0 || body.len() / width != expected {
            return Err(FieldError::CountMismatch {
                expected,
                found: body.len() / width,
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (index, chunk) in body.chunks_exact(width).enumerate() {
            let value = match header.dtype {
                GridDtype::F32Le => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
                GridDtype::F64Le => f64::from_le_bytes(chunk.try_into().unwrap()),
            };
            let offset = header_len + index * width;
            if !value.is_finite() {
                return Err(FieldError::NonFinite {
                    index,
                    offset,
                    value,
                });
            }
            if value < 0.0 {
                return Err(FieldError::Negative {
                    index,
                    offset,
                    value,
                });
            }
            values.push(value);
        }
        Ok(Self {
            dims: header.dims,
            bbox,
            values,
        })
    }
}

impl DensityField for DensityGrid {
    fn density(&self, p: &Vec3) -> Result<f64, FieldError> {
        self.interpolate(p)
    }
}

fn spacing_of(dims: [usize; 3], bbox: &Aabb) -> [f64; 3] {
    std::array::from_fn(|a| (bbox.max[a] - bbox.min[a]) / (dims[a] - 1) as f64)
}

#[inline]
pub(crate) fn trilerp(v: &[f64; 8], f: [f64; 3]) -> f64 {
    let [fx, fy, fz] = f;
    let x00 = v[0] + fx * (v[1] - v[0]);
    let x10 = v[2] + fx * (v[3] - v[2]);
    let x01 = v[4] + fx * (v[5] - v[4]);
    let x11 = v[6] + fx * (v[7] - v[6]);
    let y0 = x00 + fy * (x10 - x00);
    let y1 = x01 + fy * (x11 - x01);
    y0 + fz * (y1 - y0)
}
