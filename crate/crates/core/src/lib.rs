//! Curvature-constrained local maneuver planning for car-like vehicles.
//!
//! Paths are degree-7 clamped B-splines. Five control points are pinned by
//! the start and goal configurations; the rest are placed by a binary tree in
//! which every new point lives in a square spanned by two already placed
//! points, steered by a latent vector `phi` in `[-1, 1]`. A differentiable
//! feasibility loss (curvature, collision and total-curvature terms) drives
//! `phi`, either per problem by gradient descent or through a small network
//! trained on a suite of scenarios.
//!
//! Module map:
//!
//! * [`spline`]: knot vectors, basis matrices, derivative splines, sampling.
//! * [`builder`]: boundary control points and the control-point tree.
//! * [`world`]: occupancy grids, vehicle footprints, reference paths.
//! * [`losses`]: the feasibility loss, its gradient and the hard verdict.
//! * [`planner`]: the gradient-descent planner and the neural planner.
//! * [`bench`]: scenario suites, evaluation metrics and SVG rendering.

pub mod bench;
pub mod builder;
pub mod error;
pub mod losses;
pub mod planner;
pub mod scenario;
pub mod spline;
pub mod world;

pub use error::{Error, Result};
pub use spline::Point;
