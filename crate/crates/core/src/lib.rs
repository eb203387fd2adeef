//! Collision probabilities for robots moving through volumetric density fields.
//!
//! A non-negative density field (for example one sampled from a radiance field)
//! is treated as a Poisson point process. From that model the crate computes
//! chance-constrained collision probabilities for a spherical robot, builds the
//! probabilistically unsafe robot region (PURR) voxel map, and plans Bezier
//! spline trajectories whose control points stay inside free boxes of that map.
//!
//! Module map:
//!
//! - [`field`]: density grids, analytic scenes, trilinear interpolation.
//! - [`ppp`]: intensity conversion, Poisson CDF, likelihood, entropy, sampling.
//! - [`render`]: volumetric rendering quadrature and its point-process Monte Carlo twin.
//! - [`purr`]: cell intensity, robot kernel, convolution, thresholding.
//! - [`planner`]: A*, box corridors, the spline QP and its solver, time scaling.
//! - [`validate`]: Monte Carlo safety certification.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default). Every such loop also has a sequential path selected with
//! [`Exec`], and results do not depend on which path ran.

// `!(x >= 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod exec;
pub mod field;
pub mod geom;
pub mod planner;
pub mod ppp;
pub mod purr;
pub mod render;
pub mod validate;

pub use exec::Exec;
pub use geom::{Aabb, Vec3};
