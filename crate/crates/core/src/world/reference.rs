use std::cmp::Reverse;
use std::collections::BinaryHeap;

use pathfinding::prelude::astar;

use super::{OccupancyGrid, VehicleParams};
use crate::builder::Configuration;
use crate::error::{Error, Result};
use crate::spline::Point;

/// Something that measures how far a point is from where it should be and
/// in which direction that distance grows.
pub trait ClearanceGuide: Sync {
    /// Distance from `p` and its gradient with respect to `p`.
    fn distance(&self, p: Point) -> (f64, Point);
}

/// Collision-free polyline from the start to the goal.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePath {
    points: Vec<Point>,
}

impl ReferencePath {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("reference path needs at least one vertex".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn translated(&self, by: Point) -> Self {
        Self {
            points: self.points.iter().map(|p| p + by).collect(),
        }
    }

    /// Distance from `p` to the polyline and the closest polyline point.
    pub fn closest(&self, p: Point) -> (f64, Point) {
        if self.points.len() == 1 {
            return ((p - self.points[0]).norm(), self.points[0]);
        }
        let mut best = (f64::INFINITY, self.points[0]);
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ab = b - a;
            let len_sq = ab.norm_squared();
            let t = if len_sq > 0.0 {
                ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let foot = a + ab * t;
            let d = (p - foot).norm();
            if d < best.0 {
                best = (d, foot);
            }
        }
        best
    }
}

impl ClearanceGuide for ReferencePath {
    fn distance(&self, p: Point) -> (f64, Point) {
        let (d, foot) = self.closest(p);
        if d > 0.0 {
            (d, (p - foot) / d)
        } else {
            (0.0, Point::zeros())
        }
    }
}

/// Minimum Euclidean distance from `p` to any segment of `path`.
pub fn distance_to_polyline(p: Point, path: &ReferencePath) -> f64 {
    path.closest(p).0
}

/// Cells that stay free after growing every obstacle (and the map border) by `radius`.
fn inflated_free(grid: &OccupancyGrid, radius: f64) -> Vec<bool> {
    let (w, h, res) = (grid.width(), grid.height(), grid.resolution());
    let reach = (radius / res).floor() as isize;
    let offsets: Vec<(isize, isize)> = (-reach..=reach)
        .flat_map(|dy| (-reach..=reach).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| (((dx * dx + dy * dy) as f64).sqrt() * res) <= radius)
        .collect();
    let mut free = vec![true; w * h];
    for cy in 0..h {
        for cx in 0..w {
            let border = (cx.min(w - 1 - cx).min(cy).min(h - 1 - cy) + 1) as f64 * res;
            if border <= radius {
                free[cy * w + cx] = false;
            }
            if !grid.is_occupied(cx, cy) {
                continue;
            }
            for (dx, dy) in &offsets {
                let (x, y) = (cx as isize + dx, cy as isize + dy);
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    free[y as usize * w + x as usize] = false;
                }
            }
        }
    }
    free
}

/// Shortest 8-connected path on the grid inflated by the vehicle's inscribed
/// radius, shortened by line-of-sight pruning.
///
/// The polyline starts at the start position and ends at the goal position;
/// interior vertices are cell centers.
pub fn reference_path(
    grid: &OccupancyGrid,
    q0: &Configuration,
    qd: &Configuration,
    vehicle: &VehicleParams,
) -> Result<ReferencePath> {
    let w = grid.width();
    let free = inflated_free(grid, vehicle.inscribed_radius());
    let is_free = |c: (usize, usize)| free[c.1 * w + c.0];
    let start = grid.cell_of(q0.position()).ok_or(Error::NoReferencePath)?;
    let goal = grid.cell_of(qd.position()).ok_or(Error::NoReferencePath)?;
    if !is_free(start) || !is_free(goal) {
        return Err(Error::NoReferencePath);
    }

    // integer costs: straight moves 1e6, diagonal moves 1e6 * sqrt(2)
    const STRAIGHT: u64 = 1_000_000;
    const DIAGONAL: u64 = 1_414_214;
    let octile = |c: &(usize, usize)| {
        let dx = c.0.abs_diff(goal.0) as u64;
        let dy = c.1.abs_diff(goal.1) as u64;
        let (lo, hi) = (dx.min(dy), dx.max(dy));
        // 1_414_213 keeps the estimate below the true diagonal cost
        lo * 1_414_213 + (hi - lo) * STRAIGHT
    };
    let (h, wi) = (grid.height() as isize, w as isize);
    let successors = |c: &(usize, usize)| {
        let (x, y) = (c.0 as isize, c.1 as isize);
        let mut next = Vec::with_capacity(8);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= wi || ny >= h {
                    continue;
                }
                let n = (nx as usize, ny as usize);
                if !is_free(n) {
                    continue;
                }
                if dx != 0 && dy != 0 {
                    // no corner cutting
                    if !is_free(((x + dx) as usize, y as usize)) || !is_free((x as usize, (y + dy) as usize)) {
                        continue;
                    }
                    next.push((n, DIAGONAL));
                } else {
                    next.push((n, STRAIGHT));
                }
            }
        }
        next
    };
    let (cells, _) = astar(&start, successors, octile, |c| *c == goal).ok_or(Error::NoReferencePath)?;

    let mut vertices: Vec<Point> = cells.iter().map(|&(cx, cy)| grid.cell_center(cx, cy)).collect();
    vertices[0] = q0.position();
    let last = vertices.len() - 1;
    vertices[last] = qd.position();

    let visible = |a: Point, b: Point| {
        let n = ((b - a).norm() / (grid.resolution() / 4.0)).ceil().max(1.0) as usize;
        (0..=n).all(|k| {
            let p = a + (b - a) * (k as f64 / n as f64);
            grid.cell_of(p).is_some_and(is_free)
        })
    };
    let mut pruned = vec![vertices[0]];
    let mut anchor = 0;
    while anchor < last {
        let mut reach = anchor + 1;
        for j in (anchor + 2..=last).rev() {
            if visible(vertices[anchor], vertices[j]) {
                reach = j;
                break;
            }
        }
        pruned.push(vertices[reach]);
        anchor = reach;
    }
    ReferencePath::new(pruned)
}

/// Distance from occupied space to the nearest free cell center; zero on free cells.
///
/// Used in place of the reference path when none exists.
#[derive(Clone, Debug)]
pub struct DistanceField {
    grid: OccupancyGrid,
    nearest_free: Vec<Option<(usize, usize)>>,
}

impl DistanceField {
    pub fn new(grid: &OccupancyGrid) -> Self {
        let (w, h) = (grid.width(), grid.height());
        let mut nearest: Vec<Option<(usize, usize)>> = vec![None; w * h];
        let mut best = vec![u64::MAX; w * h];
        let mut heap = BinaryHeap::new();
        for cy in 0..h {
            for cx in 0..w {
                if !grid.is_occupied(cx, cy) {
                    nearest[cy * w + cx] = Some((cx, cy));
                    best[cy * w + cx] = 0;
                    heap.push(Reverse((0u64, cx, cy)));
                }
            }
        }
        while let Some(Reverse((d, cx, cy))) = heap.pop() {
            if d > best[cy * w + cx] {
                continue;
            }
            let src = nearest[cy * w + cx].unwrap();
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    let ex = nx.abs_diff(src.0) as u64;
                    let ey = ny.abs_diff(src.1) as u64;
                    let nd = ex * ex + ey * ey;
                    if nd < best[ny * w + nx] {
                        best[ny * w + nx] = nd;
                        nearest[ny * w + nx] = Some(src);
                        heap.push(Reverse((nd, nx, ny)));
                    }
                }
            }
        }
        Self {
            grid: grid.clone(),
            nearest_free: nearest,
        }
    }
}

impl ClearanceGuide for DistanceField {
    fn distance(&self, p: Point) -> (f64, Point) {
        let g = &self.grid;
        let local = (p - g.origin()) / g.resolution();
        let cx = (local.x.floor().max(0.0) as usize).min(g.width() - 1);
        let cy = (local.y.floor().max(0.0) as usize).min(g.height() - 1);
        let inside = g.cell_of(p).is_some();
        if inside && !g.is_occupied(cx, cy) {
            return (0.0, Point::zeros());
        }
        match self.nearest_free[cy * g.width() + cx] {
            Some((fx, fy)) => {
                let c = g.cell_center(fx, fy);
                let d = (p - c).norm();
                if d > 0.0 {
                    (d, (p - c) / d)
                } else {
                    (0.0, Point::zeros())
                }
            }
            None => (0.0, Point::zeros()),
        }
    }
}
