//! Convex QP solver for `min 1/2 x'Px + q'x  s.t.  l <= Ax <= u`.
//!
//! Either operator splitting (ADMM) or a primal-dual interior-point method
//! finds an approximate solution; an active-set polish then solves the
//! reduced KKT system exactly. ADMM stalls on badly conditioned costs such
//! as high-order spline snap, where the interior-point path takes a few
//! dozen factorizations.
//!
//! Problems arrive as dense matrices. Internally the constraint and cost
//! matrices are kept by sparse rows and the linear systems are factored in
//! band form, which costs the same as a dense factorization on dense
//! problems and far less on the banded spline QPs.

use nalgebra::{DMatrix, DVector};

use super::band::{Band, Ldl, SparseRows};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("malformed problem: {0}")]
    Dims(String),
    #[error("problem is infeasible (certificate concentrated on constraint block '{block}')")]
    Infeasible { block: String },
    #[error("problem is unbounded below")]
    Unbounded,
    #[error("no convergence after {iterations} iterations (primal residual {prim_res:e}, dual residual {dual_res:e})")]
    MaxIterations {
        iterations: usize,
        prim_res: f64,
        dual_res: f64,
    },
    #[error("KKT factorization failed")]
    Factorization,
}

/// Named range of constraint rows, used in diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Symmetric positive semidefinite, `n x n`.
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    /// `m x n`; rows with `l == u` are equalities.
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    pub blocks: Vec<ConstraintBlock>,
}

impl QpProblem {
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        l: DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = q.len();
        let m = l.len();
        if p.shape() != (n, n) {
            return Err(QpError::Dims(format!("P is {:?}, expected {n}x{n}", p.shape())));
        }
        if a.shape() != (m, n) || u.len() != m {
            return Err(QpError::Dims(format!(
                "A is {:?} with {} lower and {} upper bounds, expected {m}x{n}",
                a.shape(),
                m,
                u.len()
            )));
        }
        if (0..n).any(|i| (0..i).any(|j| (p[(i, j)] - p[(j, i)]).abs() > 1e-9 * (1.0 + p[(i, j)].abs()))) {
            return Err(QpError::Dims("P is not symmetric".into()));
        }
        if let Some(i) = (0..m).find(|&i| !(l[i] <= u[i]) || l[i] == f64::INFINITY || u[i] == f64::NEG_INFINITY) {
            return Err(QpError::Dims(format!("row {i} has empty bounds [{}, {}]", l[i], u[i])));
        }
        Ok(QpProblem {
            p,
            q,
            a,
            l,
            u,
            blocks: vec![ConstraintBlock {
                name: "constraints".into(),
                start: 0,
                len: m,
            }],
        })
    }

    pub fn with_blocks(mut self, blocks: Vec<ConstraintBlock>) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    fn is_eq(&self, i: usize) -> bool {
        self.l[i] == self.u[i]
    }

    /// `(max equality residual, max inequality violation)`.
    pub fn residuals(&self, x: &DVector<f64>) -> (f64, f64) {
        let ax = &self.a * x;
        let mut eq: f64 = 0.0;
        let mut ineq: f64 = 0.0;
        for i in 0..self.m() {
            if self.is_eq(i) {
                eq = eq.max((ax[i] - self.l[i]).abs());
            } else {
                ineq = ineq.max(self.l[i] - ax[i]).max(ax[i] - self.u[i]);
            }
        }
        (eq, ineq)
    }

    fn block_of(&self, row: usize) -> String {
        self.blocks
            .iter()
            .find(|b| row >= b.start && row < b.start + b.len)
            .map(|b| b.name.clone())
            .unwrap_or_else(|| format!("row {row}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub method: QpMethod,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    /// First ADMM stopping tolerance; tightened tenfold whenever polishing fails.
    pub eps: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub scaling_iters: usize,
    pub check_interval: usize,
    pub adaptive_rho_interval: usize,
    pub polish: bool,
    /// Residual level a returned solution must meet.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpMethod {
    /// Operator splitting followed by the active-set polish.
    Admm,
    /// Interior point followed by the active-set polish. Falls back to ADMM,
    /// which also certifies infeasibility, when it does not converge.
    InteriorPoint,
}

/// Iteration cap for the interior-point method.
const IPM_MAX_ITER: usize = 200;

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            method: QpMethod::Admm,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps: 1e-5,
            eps_infeasible: 1e-7,
            max_iter: 50_000,
            scaling_iters: 10,
            check_interval: 5,
            adaptive_rho_interval: 50,
            polish: true,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers with `Px + q + A'y = 0`.
    pub y: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
    pub prim_res: f64,
    pub dual_res: f64,
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
/// Regularization of the polish KKT system, in scaled units.
const POLISH_DELTA: f64 = 1e-12;
const POLISH_REFINE: usize = 25;
const POLISH_PASSES: usize = 30;

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct Scaled {
    p: SparseRows,
    q: DVector<f64>,
    a: SparseRows,
    l: DVector<f64>,
    u: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

/// Ruiz equilibration of the KKT matrix plus a cost scale.
fn scale(pb: &QpProblem, iters: usize) -> Scaled {
    let (n, m) = (pb.n(), pb.m());
    let mut p = pb.p.clone();
    let mut q = pb.q.clone();
    let mut a = pb.a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let clip = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..iters {
        let dd = DVector::from_fn(n, |j, _| {
            let pc = p.column(j).amax();
            let ac = if m > 0 { a.column(j).amax() } else { 0.0 };
            1.0 / clip(pc.max(ac)).sqrt()
        });
        let de = DVector::from_fn(m, |i, _| 1.0 / clip(a.row(i).amax()).sqrt());
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                a[(i, j)] *= de[i] * dd[j];
            }
        }
        q.component_mul_assign(&dd);
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
    }
    let mean_col = if n > 0 {
        (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64
    } else {
        1.0
    };
    let c = 1.0 / clip(mean_col.max(inf_norm(&q)));
    p *= c;
    q *= c;
    let l = pb.l.component_mul(&e);
    let u = pb.u.component_mul(&e);
    Scaled {
        p: SparseRows::from_dense(&p),
        q,
        a: SparseRows::from_dense(&a),
        l,
        u,
        d,
        e,
        c,
    }
}

/// Factors `P + sigma I + A' diag(rho) A` in band form.
fn admm_kkt(s: &Scaled, sigma: f64, rho: &DVector<f64>) -> Result<Ldl, QpError> {
    let n = s.q.len();
    let mut bw = 0;
    for i in 0..n {
        for (j, _) in s.p.row(i) {
            bw = bw.max(i.abs_diff(j));
        }
    }
    for r in 0..s.a.nrows {
        if let Some((lo, hi)) = s.a.span(r) {
            bw = bw.max(hi - lo);
        }
    }
    let mut k = Band::zeros(n, bw);
    for i in 0..n {
        k.add(i, i, sigma);
        for (j, v) in s.p.row(i) {
            if j <= i {
                k.add(i, j, v);
            }
        }
    }
    for r in 0..s.a.nrows {
        let lo = s.a.ptr[r];
        let hi = s.a.ptr[r + 1];
        for x in lo..hi {
            let rv = rho[r] * s.a.val[x];
            for y in lo..=x {
                k.add(s.a.col[x], s.a.col[y], rv * s.a.val[y]);
            }
        }
    }
    k.factor().ok_or(QpError::Factorization)
}

fn rho_vector(s: &Scaled, rho: f64) -> DVector<f64> {
    DVector::from_fn(s.l.len(), |i, _| {
        if s.l[i] == f64::NEG_INFINITY && s.u[i] == f64::INFINITY {
            RHO_MIN
        } else if s.l[i] == s.u[i] {
            RHO_EQ_SCALE * rho
        } else {
            rho
        }
    })
}

/// Sparse copies of the unscaled data.
struct Original {
    p: SparseRows,
    a: SparseRows,
}

pub fn solve_qp(pb: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let (n, m) = (pb.n(), pb.m());
    if n == 0 {
        return Err(QpError::Dims("no variables".into()));
    }
    let orig = Original {
        p: SparseRows::from_dense(&pb.p),
        a: SparseRows::from_dense(&pb.a),
    };
    let s = scale(pb, settings.scaling_iters);
    if settings.method == QpMethod::InteriorPoint {
        if let Some((x, y, iters)) = interior_point(&s, IPM_MAX_ITER.min(settings.max_iter)) {
            if settings.polish {
                if let Some(p) = polish(pb, &orig, &s, &x, &y, iters, settings.tolerance) {
                    return Ok(p);
                }
            }
            let sol = unscale(pb, &s, &x, &y, iters);
            if sol.prim_res <= settings.tolerance
                && sol.dual_res <= settings.tolerance * dual_magnitude(pb, &orig, &sol.x, &sol.y)
            {
                return Ok(sol);
            }
        }
    }
    let mut rho = settings.rho;
    let mut rho_vec = rho_vector(&s, rho);
    let mut kkt = admm_kkt(&s, settings.sigma, &rho_vec)?;

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let mut x_prev = x.clone();
    let mut y_prev = y.clone();
    let mut eps = settings.eps;
    let mut last = (f64::INFINITY, f64::INFINITY);

    for iter in 1..=settings.max_iter {
        let check = iter % settings.check_interval.max(1) == 0;
        if check {
            x_prev.copy_from(&x);
            y_prev.copy_from(&y);
        }
        // x-update via the reduced positive definite system
        let rz = DVector::from_fn(m, |i, _| rho_vec[i] * z[i] - y[i]);
        let rhs = settings.sigma * &x - &s.q + s.a.mul_t(&rz);
        let x_t = kkt.solve(&rhs);
        let z_t = s.a.mul(&x_t);
        let x_new = settings.alpha * &x_t + (1.0 - settings.alpha) * &x;
        let z_relax = settings.alpha * &z_t + (1.0 - settings.alpha) * &z;
        let z_new = DVector::from_fn(m, |i, _| {
            let v: f64 = z_relax[i] + y[i] / rho_vec[i];
            v.clamp(s.l[i], s.u[i])
        });
        y += DVector::from_fn(m, |i, _| rho_vec[i] * (z_relax[i] - z_new[i]));
        x = x_new;
        z = z_new;

        if !check {
            continue;
        }
        // residuals in original units
        let ax = s.a.mul(&x);
        let px = s.p.mul(&x);
        let aty = s.a.mul_t(&y);
        let prim = (0..m).fold(0.0f64, |r, i| r.max(((ax[i] - z[i]) / s.e[i]).abs()));
        let dual = (0..n).fold(0.0f64, |r, j| r.max(((px[j] + s.q[j] + aty[j]) / (s.c * s.d[j])).abs()));
        let prim_scale = (0..m).fold(0.0f64, |r, i| r.max((ax[i] / s.e[i]).abs()).max((z[i] / s.e[i]).abs()));
        let dual_scale = (0..n).fold(0.0f64, |r, j| {
            let k = s.c * s.d[j];
            r.max((px[j] / k).abs()).max((aty[j] / k).abs()).max((s.q[j] / k).abs())
        });
        last = (prim, dual);

        if prim <= eps * (1.0 + prim_scale) && dual <= eps * (1.0 + dual_scale) {
            if settings.polish {
                if let Some(p) = polish(pb, &orig, &s, &x, &y, iter, settings.tolerance) {
                    return Ok(p);
                }
            }
            let sol = unscale(pb, &s, &x, &y, iter);
            if sol.prim_res <= settings.tolerance
                && sol.dual_res <= settings.tolerance * dual_magnitude(pb, &orig, &sol.x, &sol.y)
            {
                return Ok(sol);
            }
            eps *= 0.1;
            if eps < 1e-13 {
                break;
            }
            continue;
        }

        if let Some(err) = infeasibility(pb, &orig, &s, &x, &x_prev, &y, &y_prev, settings.eps_infeasible) {
            return Err(err);
        }

        if settings.adaptive_rho_interval > 0 && iter % settings.adaptive_rho_interval == 0 {
            let pr = prim / (prim_scale + 1e-30);
            let dr = dual / (dual_scale + 1e-30);
            let new_rho = (rho * (pr / (dr + 1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                rho_vec = rho_vector(&s, rho);
                kkt = admm_kkt(&s, settings.sigma, &rho_vec)?;
            }
        }
    }
    Err(QpError::MaxIterations {
        iterations: settings.max_iter,
        prim_res: last.0,
        dual_res: last.1,
    })
}

fn unscale(pb: &QpProblem, s: &Scaled, x: &DVector<f64>, y: &DVector<f64>, iters: usize) -> QpSolution {
    let x = x.component_mul(&s.d);
    let y = y.component_mul(&s.e) / s.c;
    finish(pb, x, y, iters, false)
}

/// Size of the terms summed in the dual residual, `1 + max(|P||x|, |q|, |A'||y|)`.
fn dual_magnitude(pb: &QpProblem, orig: &Original, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let px = orig.p.abs_mul_t(x);
    let aty = orig.a.abs_mul_t(y);
    1.0 + inf_norm(&px).max(inf_norm(&pb.q)).max(inf_norm(&aty))
}

fn finish(pb: &QpProblem, x: DVector<f64>, y: DVector<f64>, iterations: usize, polished: bool) -> QpSolution {
    let (eq, ineq) = pb.residuals(&x);
    let dual = inf_norm(&(&pb.p * &x + &pb.q + pb.a.transpose() * &y));
    QpSolution {
        objective: pb.objective(&x),
        x,
        y,
        iterations,
        polished,
        prim_res: eq.max(ineq).max(0.0),
        dual_res: dual,
    }
}

/// Row state in the active-set refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Free,
    Lower,
    Upper,
    Equal,
}

fn classify(s: &Scaled, ax: &DVector<f64>, y: &DVector<f64>) -> Vec<Act> {
    (0..s.l.len())
        .map(|i| {
            if s.l[i] == s.u[i] {
                Act::Equal
            } else if s.l[i].is_finite() && y[i] + (ax[i] - s.l[i]) < 0.0 {
                Act::Lower
            } else if s.u[i].is_finite() && y[i] + (ax[i] - s.u[i]) > 0.0 {
                Act::Upper
            } else {
                Act::Free
            }
        })
        .collect()
}

/// Quasi-definite system `[P + A'WA + dI, E'; E, -dI]` over the scaled data,
/// with `E` a subset of the rows of `A`.
///
/// Variables and rows of `E` are interleaved (each row right after its last
/// column) so the matrix stays banded; the regularized factorization is
/// corrected by iterative refinement against the unregularized matrix.
struct QuasiKkt<'a> {
    s: &'a Scaled,
    weights: Option<&'a DVector<f64>>,
    rows: Vec<usize>,
    pos_var: Vec<usize>,
    pos_row: Vec<usize>,
    ldl: Ldl,
}

impl<'a> QuasiKkt<'a> {
    fn new(s: &'a Scaled, weights: Option<&'a DVector<f64>>, rows: Vec<usize>, delta: f64) -> Option<Self> {
        let n = s.q.len();
        let mut items: Vec<(usize, usize, usize)> = (0..n).map(|j| (j, 0, j)).collect();
        for (k, &r) in rows.iter().enumerate() {
            let last = s.a.span(r).map_or(0, |(_, hi)| hi);
            items.push((last, 1, k));
        }
        items.sort_unstable();
        let mut pos_var = vec![0; n];
        let mut pos_row = vec![0; rows.len()];
        for (p, &(_, kind, id)) in items.iter().enumerate() {
            if kind == 0 {
                pos_var[id] = p;
            } else {
                pos_row[id] = p;
            }
        }
        let mut bw = 0;
        for i in 0..n {
            for (j, _) in s.p.row(i) {
                bw = bw.max(pos_var[i].abs_diff(pos_var[j]));
            }
        }
        for (k, &r) in rows.iter().enumerate() {
            for (j, _) in s.a.row(r) {
                bw = bw.max(pos_row[k].abs_diff(pos_var[j]));
            }
        }
        if let Some(w) = weights {
            for r in 0..s.a.nrows {
                if w[r] != 0.0 {
                    if let Some((lo, hi)) = s.a.span(r) {
                        bw = bw.max(pos_var[hi] - pos_var[lo]);
                    }
                }
            }
        }
        let mut kkt = Band::zeros(items.len(), bw);
        for i in 0..n {
            kkt.add(pos_var[i], pos_var[i], delta);
            for (j, v) in s.p.row(i) {
                if j <= i {
                    kkt.add(pos_var[i], pos_var[j], v);
                }
            }
        }
        if let Some(w) = weights {
            for r in 0..s.a.nrows {
                if w[r] == 0.0 {
                    continue;
                }
                let (lo, hi) = (s.a.ptr[r], s.a.ptr[r + 1]);
                for x in lo..hi {
                    let wv = w[r] * s.a.val[x];
                    for y in lo..=x {
                        kkt.add(pos_var[s.a.col[x]], pos_var[s.a.col[y]], wv * s.a.val[y]);
                    }
                }
            }
        }
        for (k, &r) in rows.iter().enumerate() {
            kkt.add(pos_row[k], pos_row[k], -delta);
            for (j, v) in s.a.row(r) {
                kkt.add(pos_row[k], pos_var[j], v);
            }
        }
        let ldl = kkt.factor()?;
        Some(Self {
            s,
            weights,
            rows,
            pos_var,
            pos_row,
            ldl,
        })
    }

    fn apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let s = self.s;
        let mut yfull = DVector::zeros(s.a.nrows);
        for (k, &r) in self.rows.iter().enumerate() {
            yfull[r] = y[k];
        }
        let mut top = s.p.mul(x) + s.a.mul_t(&yfull);
        if let Some(w) = self.weights {
            let ax = s.a.mul(x);
            top += s.a.mul_t(&ax.component_mul(w));
        }
        let bottom = DVector::from_fn(self.rows.len(), |k, _| s.a.row(self.rows[k]).map(|(j, a)| a * x[j]).sum());
        (top, bottom)
    }

    /// Solves for `(x, y)` given the variable and row right-hand sides.
    fn solve(&self, bx: &DVector<f64>, by: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = bx.len();
        let dim = n + by.len();
        let mut rhs = DVector::zeros(dim);
        for j in 0..n {
            rhs[self.pos_var[j]] = bx[j];
        }
        for k in 0..by.len() {
            rhs[self.pos_row[k]] = by[k];
        }
        let split = |v: &DVector<f64>| {
            (
                DVector::from_fn(n, |j, _| v[self.pos_var[j]]),
                DVector::from_fn(by.len(), |k, _| v[self.pos_row[k]]),
            )
        };
        let mut sol = self.ldl.solve(&rhs);
        let target = 1e-15 * (1.0 + inf_norm(&rhs));
        for _ in 0..POLISH_REFINE {
            let (x, y) = split(&sol);
            let (tx, ty) = self.apply(&x, &y);
            let mut res = rhs.clone();
            for j in 0..n {
                res[self.pos_var[j]] -= tx[j];
            }
            for k in 0..by.len() {
                res[self.pos_row[k]] -= ty[k];
            }
            if inf_norm(&res) <= target {
                break;
            }
            sol += self.ldl.solve(&res);
        }
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(split(&sol))
    }
}

/// Solves the scaled KKT system with the active rows held at their bounds.
fn active_kkt(s: &Scaled, state: &[Act]) -> Option<(DVector<f64>, DVector<f64>)> {
    let rows: Vec<usize> = (0..state.len()).filter(|&i| state[i] != Act::Free).collect();
    let by = DVector::from_fn(rows.len(), |k, _| {
        let r = rows[k];
        if state[r] == Act::Upper {
            s.u[r]
        } else {
            s.l[r]
        }
    });
    let kkt = QuasiKkt::new(s, None, rows, POLISH_DELTA)?;
    let (x, yr) = kkt.solve(&(-&s.q), &by)?;
    let mut y = DVector::zeros(state.len());
    for (k, &r) in kkt.rows.iter().enumerate() {
        y[r] = yr[k];
    }
    Some((x, y))
}

/// One side of an inequality row: `sign * a_row x - bound >= 0`.
struct Side {
    row: usize,
    sign: f64,
    bound: f64,
}

/// Mehrotra predictor-corrector interior-point method on the scaled problem.
/// Returns scaled `(x, y)` in the `P x + q + A'y = 0` convention, or `None`
/// if it stalls (infeasible, unbounded, or numerically stuck problems).
fn interior_point(s: &Scaled, max_iter: usize) -> Option<(DVector<f64>, DVector<f64>, usize)> {
    let m = s.l.len();
    let eq: Vec<usize> = (0..m).filter(|&i| s.l[i] == s.u[i]).collect();
    let mut sides = Vec::new();
    for i in 0..m {
        if s.l[i] == s.u[i] {
            continue;
        }
        if s.l[i].is_finite() {
            sides.push(Side { row: i, sign: 1.0, bound: s.l[i] });
        }
        if s.u[i].is_finite() {
            sides.push(Side { row: i, sign: -1.0, bound: -s.u[i] });
        }
    }
    let ns = sides.len();
    let e_rhs = DVector::from_fn(eq.len(), |k, _| s.l[eq[k]]);
    let row_weights = |w_side: &DVector<f64>| {
        let mut w = DVector::zeros(m);
        for (k, sd) in sides.iter().enumerate() {
            w[sd.row] += w_side[k];
        }
        w
    };
    // sum_k sign_k a_k' v_k
    let side_mul_t = |v: &DVector<f64>| {
        let mut y = DVector::zeros(m);
        for (k, sd) in sides.iter().enumerate() {
            y[sd.row] += sd.sign * v[k];
        }
        s.a.mul_t(&y)
    };
    let side_values = |x: &DVector<f64>| {
        let ax = s.a.mul(x);
        DVector::from_fn(ns, |k, _| sides[k].sign * ax[sides[k].row] - sides[k].bound)
    };

    // start: least-squares fit toward the bounds, then push slacks inside
    let w0 = row_weights(&DVector::from_element(ns, 1.0));
    let mut rhs0 = -&s.q;
    rhs0 += side_mul_t(&DVector::from_fn(ns, |k, _| sides[k].bound));
    let kkt0 = QuasiKkt::new(s, Some(&w0), eq.clone(), POLISH_DELTA)?;
    let (mut x, mut y) = kkt0.solve(&rhs0, &e_rhs)?;
    let mut sl = side_values(&x).map(|v| v.max(1.0));
    let mut z = DVector::from_element(ns, 1.0);

    let q_norm = inf_norm(&s.q);
    let b_norm = inf_norm(&e_rhs).max(sides.iter().fold(0.0f64, |a, sd| a.max(sd.bound.abs())));
    for iter in 1..=max_iter {
        let gx = side_values(&x);
        let mut yfull = DVector::zeros(m);
        for (k, &r) in eq.iter().enumerate() {
            yfull[r] = y[k];
        }
        let r_d = s.p.mul(&x) + &s.q + s.a.mul_t(&yfull) - side_mul_t(&z);
        let ax = s.a.mul(&x);
        let r_e = DVector::from_fn(eq.len(), |k, _| ax[eq[k]] - e_rhs[k]);
        let r_p = &gx - &sl;
        let mu = if ns > 0 { sl.dot(&z) / ns as f64 } else { 0.0 };
        let prim = inf_norm(&r_e).max(inf_norm(&r_p));
        let dual = inf_norm(&r_d);
        if prim <= 1e-11 * (1.0 + b_norm) && dual <= 1e-11 * (1.0 + q_norm) && mu <= 1e-12 {
            let mut yout = yfull;
            for (k, sd) in sides.iter().enumerate() {
                yout[sd.row] -= sd.sign * z[k];
            }
            return Some((x, yout, iter));
        }
        if !mu.is_finite() || mu > 1e30 {
            return None;
        }

        let w_side = DVector::from_fn(ns, |k, _| z[k] / sl[k]);
        let w = row_weights(&w_side);
        let kkt = QuasiKkt::new(s, Some(&w), eq.clone(), 1e-12)?;
        let step = |r_c: &DVector<f64>| -> Option<[DVector<f64>; 4]> {
            // dz = (-r_c - z (sign a dx + r_p)) / s
            let t = DVector::from_fn(ns, |k, _| (-r_c[k] - z[k] * r_p[k]) / sl[k]);
            let bx = -&r_d + side_mul_t(&t);
            let (dx, dy) = kkt.solve(&bx, &(-&r_e))?;
            let gdx = {
                let adx = s.a.mul(&dx);
                DVector::from_fn(ns, |k, _| sides[k].sign * adx[sides[k].row])
            };
            let ds = &gdx + &r_p;
            let dz = DVector::from_fn(ns, |k, _| (-r_c[k] - z[k] * ds[k]) / sl[k]);
            Some([dx, dy, ds, dz])
        };
        let max_step = |v: &DVector<f64>, dv: &DVector<f64>| {
            (0..v.len()).fold(1.0f64, |a, k| if dv[k] < 0.0 { a.min(-v[k] / dv[k]) } else { a })
        };

        let [_, _, ds_a, dz_a] = step(&sl.component_mul(&z))?;
        let ap = max_step(&sl, &ds_a);
        let ad = max_step(&z, &dz_a);
        let mu_aff = if ns > 0 {
            (&sl + ap * &ds_a).dot(&(&z + ad * &dz_a)) / ns as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };
        let r_c = DVector::from_fn(ns, |k, _| sl[k] * z[k] + ds_a[k] * dz_a[k] - sigma * mu);
        let [dx, dy, ds, dz] = step(&r_c)?;
        let ap = (0.99 * max_step(&sl, &ds)).min(1.0);
        let ad = (0.99 * max_step(&z, &dz)).min(1.0);
        x += ap * &dx;
        sl += ap * &ds;
        y += ad * &dy;
        z += ad * &dz;
    }
    None
}

/// Primal-dual active-set refinement of an ADMM iterate (scaled `x`, `y`).
/// Each pass solves the KKT system on the current active set and re-reads
/// the set from the result; returns the first pass meeting `tol`.
fn polish(
    pb: &QpProblem,
    orig: &Original,
    s: &Scaled,
    x: &DVector<f64>,
    y: &DVector<f64>,
    iters: usize,
    tol: f64,
) -> Option<QpSolution> {
    let mut state = classify(s, &s.a.mul(x), y);
    for _ in 0..POLISH_PASSES {
        let (xs, ys) = active_kkt(s, &state)?;
        // Drop multipliers of the wrong sign before checking.
        let yc = DVector::from_fn(ys.len(), |i, _| match state[i] {
            Act::Lower => ys[i].min(0.0),
            Act::Upper => ys[i].max(0.0),
            Act::Equal => ys[i],
            Act::Free => 0.0,
        });
        let mut out = unscale(pb, s, &xs, &yc, iters);
        out.polished = true;
        if out.prim_res <= tol && out.dual_res <= tol * dual_magnitude(pb, orig, &out.x, &out.y) {
            return Some(out);
        }
        let next = classify(s, &s.a.mul(&xs), &ys);
        if next == state {
            return None;
        }
        state = next;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn infeasibility(
    pb: &QpProblem,
    orig: &Original,
    s: &Scaled,
    x: &DVector<f64>,
    x_prev: &DVector<f64>,
    y: &DVector<f64>,
    y_prev: &DVector<f64>,
    eps: f64,
) -> Option<QpError> {
    let (n, m) = (pb.n(), pb.m());
    // primal: a direction dy with A'dy = 0 and support function negative
    let dy = DVector::from_fn(m, |i, _| (y[i] - y_prev[i]) * s.e[i]);
    let dy_norm = inf_norm(&dy);
    if dy_norm > 1e-30 {
        let aty = orig.a.mul_t(&dy);
        let mut support = 0.0;
        let mut unbounded_dir = false;
        for i in 0..m {
            if dy[i] > 0.0 {
                if pb.u[i].is_infinite() {
                    unbounded_dir |= dy[i] > eps * dy_norm;
                } else {
                    support += pb.u[i] * dy[i];
                }
            } else if dy[i] < 0.0 {
                if pb.l[i].is_infinite() {
                    unbounded_dir |= -dy[i] > eps * dy_norm;
                } else {
                    support += pb.l[i] * dy[i];
                }
            }
        }
        if !unbounded_dir && inf_norm(&aty) <= eps * dy_norm && support < -eps * dy_norm {
            let row = (0..m).max_by(|&a, &b| dy[a].abs().total_cmp(&dy[b].abs())).unwrap_or(0);
            let first = (0..m).find(|&i| dy[i].abs() > 1e-3 * dy_norm).unwrap_or(row);
            return Some(QpError::Infeasible {
                block: pb.block_of(first),
            });
        }
    }
    // dual: a descent direction dx with P dx = 0 staying in the recession cone
    let dx = DVector::from_fn(n, |j, _| (x[j] - x_prev[j]) * s.d[j]);
    let dx_norm = inf_norm(&dx);
    if dx_norm > 1e-30 {
        let pdx = orig.p.mul(&dx);
        let adx = orig.a.mul(&dx);
        let tol = eps * dx_norm;
        let cone_ok = (0..m).all(|i| {
            let lo_ok = pb.l[i].is_infinite() || adx[i] >= -tol;
            let hi_ok = pb.u[i].is_infinite() || adx[i] <= tol;
            lo_ok && hi_ok
        });
        if cone_ok && inf_norm(&pdx) <= tol && pb.q.dot(&dx) < -tol {
            return Some(QpError::Unbounded);
        }
    }
    None
}
