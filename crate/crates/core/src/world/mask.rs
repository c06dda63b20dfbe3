use super::{collision_indicator, Footprint, OccupancyGrid, VehicleParams};

/// Cells from which a body, placed with its guiding point there, can reach an
/// occupied cell or the map border.
///
/// [`CollisionMask::collides`] returns the same answer as
/// [`collision_indicator`] but skips the outline walk for guiding points far
/// from every obstacle, so its cost depends on the map.
#[derive(Clone, Debug)]
pub struct CollisionMask {
    width: usize,
    near: Vec<bool>,
}

impl CollisionMask {
    pub fn new(grid: &OccupancyGrid, vehicle: &VehicleParams) -> Self {
        let (w, h) = (grid.width(), grid.height());
        let res = grid.resolution();
        let reach = vehicle
            .local_corners()
            .iter()
            .fold(0.0f64, |m, c| m.max(c.norm()));
        // an outline point within `reach` of the guiding point lies in a cell
        // whose center is within `reach + sqrt(2) res` of the guiding cell's center
        let radius = reach + std::f64::consts::SQRT_2 * res + 1e-9;
        let r_cells = radius / res;
        let span = r_cells.ceil() as isize;
        let mut near = vec![false; w * h];

        for cy in 0..h {
            for cx in 0..w {
                // distance from the cell center to the nearest map edge, in cells
                let edge = (cx as f64 + 0.5)
                    .min(cy as f64 + 0.5)
                    .min(w as f64 - cx as f64 - 0.5)
                    .min(h as f64 - cy as f64 - 0.5);
                if edge <= r_cells {
                    near[cy * w + cx] = true;
                }
            }
        }
        let occupied = |x: isize, y: isize| grid.is_occupied(x as usize, y as usize);
        for cy in 0..h as isize {
            for cx in 0..w as isize {
                if !occupied(cx, cy) {
                    continue;
                }
                near[cy as usize * w + cx as usize] = true;
                // the nearest occupied cell to any free cell borders free space
                let borders_free = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| {
                    let (x, y) = (cx + dx, cy + dy);
                    x >= 0 && y >= 0 && x < w as isize && y < h as isize && !occupied(x, y)
                });
                if !borders_free {
                    continue;
                }
                for dy in -span..=span {
                    for dx in -span..=span {
                        let (x, y) = (cx + dx, cy + dy);
                        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                            continue;
                        }
                        if ((dx * dx + dy * dy) as f64).sqrt() <= r_cells {
                            near[y as usize * w + x as usize] = true;
                        }
                    }
                }
            }
        }
        Self { width: w, near }
    }

    /// Same result as [`collision_indicator`] for the vehicle the mask was built for.
    pub fn collides(&self, fp: &Footprint, grid: &OccupancyGrid) -> bool {
        match grid.cell_of(fp.guide) {
            Some((cx, cy)) if !self.near[cy * self.width + cx] => false,
            _ => collision_indicator(fp, grid),
        }
    }

    /// Fraction of cells that need the full outline walk.
    pub fn near_fraction(&self) -> f64 {
        self.near.iter().filter(|n| **n).count() as f64 / self.near.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::footprint_at;
    use crate::Point;
    use proptest::prelude::*;

    fn cluttered() -> OccupancyGrid {
        let mut g = OccupancyGrid::local_map();
        g.fill_rect(Point::new(8.0, 3.0), Point::new(9.0, 12.0));
        g.fill_disc(Point::new(17.0, 17.0), 1.3);
        g.set(100, 40, true);
        g
    }

    #[test]
    fn empty_map_interior_is_skipped() {
        let g = OccupancyGrid::local_map();
        let m = CollisionMask::new(&g, &VehicleParams::default());
        assert!(m.near_fraction() < 0.7);
        assert!(m.near_fraction() > 0.0);
    }

    proptest! {
        #[test]
        fn agrees_with_full_walk(x in -1.0..26.6f64, y in -1.0..26.6f64, th in -4.0..4.0f64) {
            let g = cluttered();
            let v = VehicleParams::default();
            let m = CollisionMask::new(&g, &v);
            let fp = footprint_at(Point::new(x, y), th, &v);
            prop_assert_eq!(m.collides(&fp, &g), collision_indicator(&fp, &g));
        }
    }
}
