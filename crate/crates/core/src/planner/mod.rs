//! Trajectory planning through PURR free space: A* over cells, a corridor of
//! free boxes around the path, and a Bezier-spline QP confined to the boxes.
//!
//! Each box hosts `pieces_per_box` consecutive Bezier pieces. With the
//! default degree 8 and C4 joints the middle control point of a piece is
//! pinned by both neighbors, and two pieces per box keep the QP feasible
//! whenever consecutive boxes overlap.

mod astar;
mod band;
pub mod bezier;
mod corridor;
pub mod qp;
mod spline;

pub use astar::{astar, GridPath, SearchError};
pub use corridor::{build_corridor, grow_box, prune_boxes, split_segments, Corridor, FreeSpace, StraightRun, VoxelBox};
pub use qp::{solve_qp, ConstraintBlock, QpError, QpMethod, QpProblem, QpSettings, QpSolution};
pub use spline::{assemble_qp, time_rescale, SplineQp, SplineSpec, SplineTrajectory, TimeLimits, RESCALE_SAMPLES};

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::geom::{Aabb, Vec3};
use crate::purr::PurrMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("A* search: {0}")]
    Search(#[from] SearchError),
    #[error("spline QP ({axis} axis): {source}")]
    Qp { axis: char, source: QpError },
    #[error("invalid planner parameters: {0}")]
    Params(String),
    #[error("spline evaluation: {0}")]
    Eval(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanParams {
    pub spline: SplineSpec,
    /// Overlap fraction above which a box is merged into its predecessor.
    pub overlap_theta: f64,
    pub pieces_per_box: usize,
    /// Box inset as a fraction of the cell size.
    pub box_margin: f64,
    pub limits: TimeLimits,
    pub qp: QpSettings,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            spline: SplineSpec::default(),
            overlap_theta: 0.8,
            pieces_per_box: 2,
            box_margin: 1e-4,
            limits: TimeLimits::default(),
            qp: QpSettings {
                method: QpMethod::InteriorPoint,
                ..QpSettings::default()
            },
        }
    }
}

/// Wall-clock seconds per planning stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PlanTimings {
    pub astar: f64,
    pub boxes: f64,
    pub qp: f64,
    pub rescale: f64,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub path: GridPath,
    pub runs: Vec<StraightRun>,
    pub corridor: Corridor,
    pub trajectory: SplineTrajectory,
    pub objective: f64,
    pub qp_iterations: usize,
    pub timings: PlanTimings,
}

pub fn plan(purr: &PurrMap, p0: &Vec3, pf: &Vec3, params: &PlanParams) -> Result<Plan, PlanError> {
    params.spline.validate()?;
    if !(params.overlap_theta > 0.0 && params.overlap_theta <= 1.0) {
        return Err(PlanError::Params(format!("overlap theta must be in (0, 1], got {}", params.overlap_theta)));
    }
    if params.pieces_per_box == 0 {
        return Err(PlanError::Params("pieces per box must be at least 1".into()));
    }
    if !(params.box_margin >= 0.0 && params.box_margin < 0.5) {
        return Err(PlanError::Params(format!("box margin must be in [0, 0.5), got {}", params.box_margin)));
    }

    let t = Instant::now();
    let path = astar(purr, p0, pf)?;
    let t_astar = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let runs = split_segments(&path);
    let corridor = build_corridor(purr, &path, &runs, params.overlap_theta, params.box_margin);
    let t_boxes = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let piece_boxes: Vec<Aabb> = corridor
        .boxes
        .iter()
        .flat_map(|b| std::iter::repeat_n(*b, params.pieces_per_box))
        .collect();
    let qp = assemble_qp(&piece_boxes, p0, pf, &params.spline)?;
    let mut iterations = 0;
    let mut objective = 0.0;
    let mut xs = Vec::with_capacity(3);
    for (ax, name) in ['x', 'y', 'z'].into_iter().enumerate() {
        let sol = solve_qp(&qp.axes[ax], &params.qp).map_err(|source| PlanError::Qp { axis: name, source })?;
        iterations += sol.iterations;
        objective += sol.objective;
        xs.push(sol.x);
    }
    let xs: [_; 3] = xs.try_into().expect("three axes");
    let mut trajectory = qp.trajectory(&xs);
    let t_qp = t.elapsed().as_secs_f64();

    let t = Instant::now();
    trajectory.durations = time_rescale(&trajectory, &params.limits)?;
    let t_rescale = t.elapsed().as_secs_f64();

    Ok(Plan {
        path,
        runs,
        corridor,
        trajectory,
        objective,
        qp_iterations: iterations,
        timings: PlanTimings {
            astar: t_astar,
            boxes: t_boxes,
            qp: t_qp,
            rescale: t_rescale,
        },
    })
}
