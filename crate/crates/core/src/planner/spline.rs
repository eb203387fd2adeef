use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bezier::{de_casteljau, derivative_gram, derivative_points, end_derivative_row, smoothing_matrix};
use super::qp::{ConstraintBlock, QpError, QpProblem};
use super::PlanError;
use crate::geom::{Aabb, Vec3};

/// Piecewise Bezier curve; piece `i` runs over its own `t in [0, 1]` and
/// takes `durations[i]` seconds once time-scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTrajectory {
    pub degree: usize,
    pub continuity: usize,
    pub segments: Vec<Vec<[f64; 3]>>,
    /// Box holding each segment's control points.
    pub boxes: Vec<Aabb>,
    pub durations: Vec<f64>,
}

impl SplineTrajectory {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// `order`-th derivative of segment `i` with respect to its curve parameter.
    pub fn eval(&self, i: usize, t: f64, order: usize) -> Result<[f64; 3], PlanError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(PlanError::Eval(format!("curve parameter {t} outside [0, 1]")));
        }
        let seg = self
            .segments
            .get(i)
            .ok_or_else(|| PlanError::Eval(format!("segment {i} of {}", self.segments.len())))?;
        if order > self.degree {
            return Ok([0.0; 3]);
        }
        Ok(de_casteljau(&derivative_points(seg, order), t))
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Position at wall time `tau`, clamped to the trajectory's span.
    pub fn position_at(&self, tau: f64) -> [f64; 3] {
        let mut rest = tau.max(0.0);
        for (i, &d) in self.durations.iter().enumerate() {
            if rest <= d || i + 1 == self.segments.len() {
                let t = if d > 0.0 { (rest / d).min(1.0) } else { 1.0 };
                return de_casteljau(&self.segments[i], t);
            }
            rest -= d;
        }
        self.segments.last().map(|s| s[s.len() - 1]).unwrap_or([0.0; 3])
    }

    /// `(segment, t, point)` at `per_segment` evenly spaced parameters per segment.
    pub fn sample(&self, per_segment: usize) -> Vec<(usize, f64, [f64; 3])> {
        let n = per_segment.max(2);
        let mut out = Vec::with_capacity(n * self.segments.len());
        for (i, s) in self.segments.iter().enumerate() {
            for j in 0..n {
                let t = j as f64 / (n - 1) as f64;
                out.push((i, t, de_casteljau(s, t)));
            }
        }
        out
    }

    /// Polyline length at `per_segment` samples per segment.
    pub fn length(&self, per_segment: usize) -> f64 {
        let pts = self.sample(per_segment);
        pts.windows(2)
            .map(|w| {
                let d: [f64; 3] = std::array::from_fn(|a| w[1].2[a] - w[0].2[a]);
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            })
            .sum()
    }

    /// Largest joint mismatch in parameter-space derivatives of orders `0..=continuity`.
    pub fn continuity_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.segments.len().saturating_sub(1) {
            for k in 0..=self.continuity {
                let a = de_casteljau(&derivative_points(&self.segments[i], k), 1.0);
                let b = de_casteljau(&derivative_points(&self.segments[i + 1], k), 0.0);
                for ax in 0..3 {
                    worst = worst.max((a[ax] - b[ax]).abs());
                }
            }
        }
        worst
    }

    /// Largest distance by which any control point leaves its box.
    pub fn box_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (seg, b) in self.segments.iter().zip(&self.boxes) {
            for p in seg {
                for a in 0..3 {
                    worst = worst.max(b.min[a] - p[a]).max(p[a] - b.max[a]);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplineSpec {
    pub degree: usize,
    pub continuity: usize,
    /// Derivative order penalized by the integral cost.
    pub snap_order: usize,
    pub smooth_weight: f64,
}

impl Default for SplineSpec {
    fn default() -> Self {
        Self {
            degree: 8,
            continuity: 4,
            snap_order: 4,
            smooth_weight: 1.0,
        }
    }
}

impl SplineSpec {
    pub fn validate(&self) -> Result<(), PlanError> {
        let SplineSpec {
            degree: n,
            continuity: d,
            snap_order: k,
            smooth_weight: w,
        } = *self;
        if n == 0 || k > n || d > n || d + 1 < k {
            return Err(PlanError::Params(format!(
                "need degree >= continuity >= snap order - 1 and snap order <= degree, got N={n}, D={d}, d={k}"
            )));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(PlanError::Params(format!("smoothing weight must be non-negative, got {w}")));
        }
        Ok(())
    }
}

/// One scalar QP per axis; the axes share structure but not variables.
#[derive(Debug, Clone)]
pub struct SplineQp {
    pub axes: [QpProblem; 3],
    pub pieces: usize,
    pub spec: SplineSpec,
    pub boxes: Vec<Aabb>,
    /// Per-axis origin subtracted from every variable; the cost is translation invariant.
    pub origin: [f64; 3],
}

/// Builds the control-point QP for one Bezier piece per entry of `boxes`.
///
/// Per axis: cost `sum_i integral (p_i^(d))^2 + w sum_k (s_{k+1} - s_k)^2`,
/// box bounds on each piece's control points (a joint point takes the
/// intersection of its two boxes), parameter-space continuity of
/// orders `0..=D` at joints, and the two endpoint equalities.
pub fn assemble_qp(boxes: &[Aabb], p0: &Vec3, pf: &Vec3, spec: &SplineSpec) -> Result<SplineQp, PlanError> {
    spec.validate()?;
    if boxes.is_empty() {
        return Err(PlanError::Params("corridor has no boxes".into()));
    }
    let n1 = spec.degree + 1;
    let pieces = boxes.len();
    let nv = pieces * n1;
    let mut cost = derivative_gram(spec.degree, spec.snap_order);
    cost += smoothing_matrix(spec.degree) * spec.smooth_weight;
    // 1/2 x'Px convention
    cost *= 2.0;
    let mut p = DMatrix::zeros(nv, nv);
    for i in 0..pieces {
        p.view_mut((i * n1, i * n1), (n1, n1)).copy_from(&cost);
    }

    let joints = pieces - 1;
    for j in 0..joints {
        let (b0, b1) = (&boxes[j], &boxes[j + 1]);
        if let Some(ax) = (0..3).find(|&ax| b0.min[ax].max(b1.min[ax]) > b0.max[ax].min(b1.max[ax])) {
            return Err(PlanError::Qp {
                axis: ['x', 'y', 'z'][ax],
                source: QpError::Infeasible {
                    block: format!("joint {j} continuity"),
                },
            });
        }
    }
    let n_eq = 2 + joints * (spec.continuity + 1);
    // C0 makes the first point of a piece equal to the last point of the one
    // before, so each shared point carries a single row for both boxes.
    let box_rows: Vec<(usize, usize)> = (0..pieces)
        .flat_map(|i| (usize::from(i > 0)..n1).map(move |c| (i, c)))
        .collect();
    let m = n_eq + box_rows.len();
    let mut a = DMatrix::zeros(m, nv);
    let mut blocks = vec![
        ConstraintBlock { name: "start".into(), start: 0, len: 1 },
        ConstraintBlock { name: "goal".into(), start: 1, len: 1 },
    ];
    a[(0, 0)] = 1.0;
    a[(1, nv - 1)] = 1.0;
    let mut row = 2;
    for j in 0..joints {
        blocks.push(ConstraintBlock {
            name: format!("joint {j} continuity"),
            start: row,
            len: spec.continuity + 1,
        });
        for k in 0..=spec.continuity {
            let end = end_derivative_row(spec.degree, k, true);
            let start = end_derivative_row(spec.degree, k, false);
            for c in 0..n1 {
                a[(row, j * n1 + c)] += end[c];
                a[(row, (j + 1) * n1 + c)] -= start[c];
            }
            row += 1;
        }
    }
    for i in 0..pieces {
        let len = box_rows.iter().filter(|r| r.0 == i).count();
        blocks.push(ConstraintBlock {
            name: format!("segment {i} box"),
            start: row,
            len,
        });
        row += len;
    }
    for (r, &(i, c)) in box_rows.iter().enumerate() {
        a[(n_eq + r, i * n1 + c)] = 1.0;
    }

    let origin = [p0.x, p0.y, p0.z];
    let axes = std::array::from_fn(|ax| {
        let o = origin[ax];
        let mut l = DVector::zeros(m);
        let mut u = DVector::zeros(m);
        l[1] = pf[ax] - o;
        u[1] = pf[ax] - o;
        for (r, &(i, c)) in box_rows.iter().enumerate() {
            let (mut lo, mut hi) = (boxes[i].min[ax], boxes[i].max[ax]);
            if c == n1 - 1 && i + 1 < pieces {
                lo = lo.max(boxes[i + 1].min[ax]);
                hi = hi.min(boxes[i + 1].max[ax]);
            }
            l[n_eq + r] = lo - o;
            u[n_eq + r] = hi - o;
        }
        QpProblem {
            p: p.clone(),
            q: DVector::zeros(nv),
            a: a.clone(),
            l,
            u,
            blocks: blocks.clone(),
        }
    });
    Ok(SplineQp {
        axes,
        pieces,
        spec: *spec,
        boxes: boxes.to_vec(),
        origin,
    })
}

impl SplineQp {
    /// Reassembles per-axis solutions into a trajectory with unit durations.
    pub fn trajectory(&self, xs: &[DVector<f64>; 3]) -> SplineTrajectory {
        let n1 = self.spec.degree + 1;
        let segments = (0..self.pieces)
            .map(|i| {
                (0..n1)
                    .map(|c| std::array::from_fn(|ax| self.origin[ax] + xs[ax][i * n1 + c]))
                    .collect()
            })
            .collect();
        SplineTrajectory {
            degree: self.spec.degree,
            continuity: self.spec.continuity,
            segments,
            boxes: self.boxes.clone(),
            durations: vec![1.0; self.pieces],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub min_duration: f64,
    /// Give every segment the largest required duration.
    pub uniform: bool,
}

impl Default for TimeLimits {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            a_max: 2.0,
            min_duration: 0.05,
            uniform: true,
        }
    }
}

pub const RESCALE_SAMPLES: usize = 64;

/// Smallest per-segment durations meeting the speed and acceleration limits
/// at 64 evenly spaced parameters. Only durations change, never geometry.
pub fn time_rescale(traj: &SplineTrajectory, limits: &TimeLimits) -> Result<Vec<f64>, PlanError> {
    if !(limits.v_max > 0.0 && limits.a_max > 0.0 && limits.min_duration >= 0.0) {
        return Err(PlanError::Params(format!(
            "need positive dynamic limits, got v={} a={} min={}",
            limits.v_max, limits.a_max, limits.min_duration
        )));
    }
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let mut out: Vec<f64> = traj
        .segments
        .iter()
        .map(|s| {
            let d1 = derivative_points(s, 1);
            let d2 = derivative_points(s, 2);
            let mut vmax: f64 = 0.0;
            let mut amax: f64 = 0.0;
            for j in 0..RESCALE_SAMPLES {
                let t = j as f64 / (RESCALE_SAMPLES - 1) as f64;
                vmax = vmax.max(norm(de_casteljau(&d1, t)));
                amax = amax.max(norm(de_casteljau(&d2, t)));
            }
            (vmax / limits.v_max).max((amax / limits.a_max).sqrt()).max(limits.min_duration)
        })
        .collect();
    if limits.uniform {
        let t = out.iter().copied().fold(0.0, f64::max);
        out.iter_mut().for_each(|d| *d = t);
    }
    Ok(out)
}
