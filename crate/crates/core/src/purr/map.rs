use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PurrError, RobotIntensityGrid};
use crate::exec::Exec;
use crate::geom::{Aabb, Vec3};
use crate::ppp::{cdf_unchecked, threshold_bracket, PppConfig};

pub const PURR_MAGIC: &str = "PURR1";

/// Binary unsafe-cell map with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PurrMap {
    pub dims: [usize; 3],
    pub bbox: Aabb,
    /// `true` = unsafe, x-fastest.
    pub cells: Vec<bool>,
    pub config: PppConfig,
    pub robot_radius: f64,
}

/// First line of a PURR file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurrHeader {
    pub magic: String,
    pub dims: [usize; 3],
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub sigma: f64,
    pub v_max: f64,
    pub gamma: f64,
    pub a_aux: f64,
    pub alpha: f64,
    pub robot_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
}

/// Thresholds every cell: unsafe iff `cdf(n_aux_max; I_r) < sigma - alpha`.
///
/// Intensities below the precomputed crossing bracket are safe and those
/// above it unsafe without evaluating the CDF.
pub fn build_purr(
    ir: &RobotIntensityGrid,
    cfg: &PppConfig,
    exec: Exec,
) -> Result<PurrMap, PurrError> {
    cfg.validate()?;
    let n_max = cfg.n_aux_max();
    let level = cfg.level();
    let (lo, hi) = threshold_bracket(n_max, level).unwrap_or((f64::INFINITY, f64::INFINITY));
    let cells = classify(&ir.values, exec, |v| {
        if !v.is_finite() {
            true
        } else if v <= lo {
            false
        } else if v >= hi {
            true
        } else {
            cdf_unchecked(n_max, v) < level
        }
    });
    Ok(PurrMap {
        dims: ir.dims,
        bbox: ir.bbox,
        cells,
        config: *cfg,
        robot_radius: ir.robot_radius,
    })
}

fn classify(values: &[f64], exec: Exec, f: impl Fn(f64) -> bool + Sync + Send) -> Vec<bool> {
    const CHUNK: usize = 1 << 14;
    exec.map_range(values.len().div_ceil(CHUNK), |c| {
        values[c * CHUNK..((c + 1) * CHUNK).min(values.len())]
            .iter()
            .map(|&v| f(v))
            .collect::<Vec<_>>()
    })
    .concat()
}

impl PurrMap {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, cell: [usize; 3]) -> usize {
        cell[0] + self.dims[0] * (cell[1] + self.dims[1] * cell[2])
    }

    pub fn cell_of_index(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Out-of-range cells are unsafe.
    pub fn is_unsafe(&self, cell: [usize; 3]) -> bool {
        if (0..3).any(|a| cell[a] >= self.dims[a]) {
            return true;
        }
        self.cells[self.index(cell)]
    }

    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.bbox.max[a] - self.bbox.min[a]) / self.dims[a] as f64)
    }

    pub fn cell_box(&self, cell: [usize; 3]) -> Aabb {
        let h = self.spacing();
        let min: [f64; 3] = std::array::from_fn(|a| self.bbox.min[a] + cell[a] as f64 * h[a]);
        let max: [f64; 3] = std::array::from_fn(|a| min[a] + h[a]);
        Aabb::new(min, max)
    }

    pub fn cell_center(&self, cell: [usize; 3]) -> Vec3 {
        self.cell_box(cell).center()
    }

    /// Cell containing `p`; points on the max face belong to the last cell.
    pub fn cell_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        if !self.bbox.contains(p) {
            return None;
        }
        let h = self.spacing();
        Some(std::array::from_fn(|a| {
            (((p[a] - self.bbox.min[a]) / h[a]) as usize).min(self.dims[a] - 1)
        }))
    }

    /// Whether `p` lies in a PURR-free cell. Outside the grid is unsafe.
    pub fn is_point_safe(&self, p: &Vec3) -> bool {
        self.cell_of(p).is_some_and(|c| !self.is_unsafe(c))
    }

    pub fn unsafe_count(&self) -> usize {
        self.cells.iter().filter(|&&u| u).count()
    }

    pub fn safe_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &u)| !u)
            .map(|(i, _)| self.cell_of_index(i))
    }

    pub fn header(&self) -> PurrHeader {
        PurrHeader {
            magic: PURR_MAGIC.to_string(),
            dims: self.dims,
            bbox_min: self.bbox.min,
            bbox_max: self.bbox.max,
            sigma: self.config.sigma,
            v_max: self.config.v_max,
            gamma: self.config.gamma,
            a_aux: self.config.a_aux,
            alpha: self.config.alpha,
            robot_radius: self.robot_radius,
            delta_t: Some(self.config.delta_t),
        }
    }

    /// JSON header line, then occupancy bits LSB-first, x-fastest.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), PurrError> {
        serde_json::to_writer(&mut *w, &self.header())?;
        w.write_all(b"\n")?;
        let mut bytes = vec![0u8; self.cells.len().div_ceil(8)];
        for (i, &u) in self.cells.iter().enumerate() {
            if u {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from(mut r: impl BufRead) -> Result<Self, PurrError> {
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(PurrError::Format("missing header line".into()));
        }
        let h: PurrHeader = serde_json::from_slice(&line)?;
        if h.magic != PURR_MAGIC {
            return Err(PurrError::Format(format!("bad magic {:?}", h.magic)));
        }
        if h.dims.contains(&0) {
            return Err(PurrError::Format(format!("empty dims {:?}", h.dims)));
        }
        let n = h.dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| PurrError::Format("dims overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n.div_ceil(8) {
            return Err(PurrError::Format(format!(
                "expected {} occupancy bytes, found {}",
                n.div_ceil(8),
                bytes.len()
            )));
        }
        let cells = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        let defaults = PppConfig::default();
        Ok(PurrMap {
            dims: h.dims,
            bbox: Aabb::new(h.bbox_min, h.bbox_max),
            cells,
            config: PppConfig {
                gamma: h.gamma,
                a_aux: h.a_aux,
                delta_t: h.delta_t.unwrap_or(defaults.delta_t),
                v_max: h.v_max,
                sigma: h.sigma,
                alpha: h.alpha,
            },
            robot_radius: h.robot_radius,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PurrError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PurrError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
