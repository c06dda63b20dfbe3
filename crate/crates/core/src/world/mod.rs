//! The planning environment: occupancy grids, the vehicle footprint,
//! collision queries and the auxiliary reference path used by the collision
//! loss.
//!
//! Map frame: cell `(0, 0)` starts at the grid origin, x grows to the right
//! and y grows upward. Everything outside the grid counts as occupied.

mod grid;
mod mask;
mod reference;
mod vehicle;

pub use grid::{load_grid, GridFormat, OccupancyGrid};
pub use mask::CollisionMask;
pub use reference::{
    distance_to_polyline, reference_path, ClearanceGuide, DistanceField, ReferencePath,
};
pub use vehicle::{collision_indicator, footprint_at, Footprint, VehicleParams};
