use serde::{Deserialize, Serialize};

use super::OccupancyGrid;
use crate::error::{Error, Result};
use crate::spline::Point;

/// Rectangular car with an Ackermann curvature limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Body length in m.
    pub length: f64,
    /// Body width in m.
    pub width: f64,
    /// Distance from the rear bumper to the guiding point, in m.
    pub rear_axle_offset: f64,
    /// Maximal admissible curvature `1 / R_min`, in 1/m.
    pub kappa_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            length: 4.05,
            width: 1.72,
            rear_axle_offset: 0.4,
            kappa_max: 0.227,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length", self.length),
            ("width", self.width),
            ("rear_axle_offset", self.rear_axle_offset),
            ("kappa_max", self.kappa_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Contract(format!("vehicle {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Radius of the largest disc inside the body.
    pub fn inscribed_radius(&self) -> f64 {
        self.width.min(self.length) / 2.0
    }

    /// Body corners relative to the guiding point at heading 0:
    /// rear-right, front-right, front-left, rear-left.
    pub fn local_corners(&self) -> [Point; 4] {
        let rear = -self.rear_axle_offset;
        let front = self.length - self.rear_axle_offset;
        let half = self.width / 2.0;
        [
            Point::new(rear, -half),
            Point::new(front, -half),
            Point::new(front, half),
            Point::new(rear, half),
        ]
    }
}

/// Vehicle body placed at a pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    /// Rear-right, front-right, front-left, rear-left.
    pub corners: [Point; 4],
    /// Middle of the rear axle.
    pub guide: Point,
}

impl Footprint {
    /// The four corners followed by the guiding point.
    pub fn characteristic_points(&self) -> [Point; 5] {
        let [a, b, c, d] = self.corners;
        [a, b, c, d, self.guide]
    }
}

/// Body rectangle with the guiding point at `position`, long axis along `heading`.
pub fn footprint_at(position: Point, heading: f64, vehicle: &VehicleParams) -> Footprint {
    let (s, c) = heading.sin_cos();
    let corners = vehicle
        .local_corners()
        .map(|l| position + Point::new(c * l.x - s * l.y, s * l.x + c * l.y));
    Footprint {
        corners,
        guide: position,
    }
}

/// Whether any cell touched by the body outline is occupied or off the map.
///
/// Each edge is walked at a spacing of at most half a cell. Every edge point
/// is visited even after a hit, so the cost does not depend on the map.
pub fn collision_indicator(fp: &Footprint, grid: &OccupancyGrid) -> bool {
    // walk in cell units: half a cell is 0.5
    let inv = 1.0 / grid.resolution();
    let origin = grid.origin();
    let (w, h) = (grid.width(), grid.height());
    let (wf, hf) = (w as f64, h as f64);
    let cells = grid.cells();
    let local = fp.corners.map(|c| (c - origin) * inv);
    let mut hit = false;
    for e in 0..4 {
        let (a, b) = (local[e], local[(e + 1) % 4]);
        let ab = b - a;
        let n = (ab.norm() / 0.5).ceil().max(1.0) as usize;
        let inv_n = 1.0 / n as f64;
        for k in 0..n {
            let t = k as f64 * inv_n;
            let (x, y) = (a.x + ab.x * t, a.y + ab.y * t);
            hit |= if x >= 0.0 && y >= 0.0 && x < wf && y < hf {
                cells[y as usize * w + x as usize]
            } else {
                true
            };
        }
    }
    hit
}
