//! SVG drawings of a planned path in its scenario.

use std::fmt::Write as _;
use std::path::Path;

use crate::builder::tree_layout;
use crate::error::Result;
use crate::losses::sample_collisions;
use crate::planner::PlanResult;
use crate::scenario::{write_file, Scenario};
use crate::world::footprint_at;
use crate::Point;

/// Pixels per meter.
const SCALE: f64 = 20.0;
/// A footprint is drawn at every this many samples.
const FOOTPRINT_STRIDE: usize = 32;

struct Canvas {
    origin: Point,
    height_m: f64,
    out: String,
}

impl Canvas {
    fn xy(&self, p: Point) -> (f64, f64) {
        (
            (p.x - self.origin.x) * SCALE,
            (self.height_m - (p.y - self.origin.y)) * SCALE,
        )
    }

    fn points(&self, pts: impl IntoIterator<Item = Point>) -> String {
        pts.into_iter()
            .map(|p| {
                let (x, y) = self.xy(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn polyline(&mut self, pts: impl IntoIterator<Item = Point>, style: &str) {
        let pts = self.points(pts);
        let _ = writeln!(self.out, r#"<polyline points="{pts}" fill="none" {style}/>"#);
    }

    fn polygon(&mut self, pts: impl IntoIterator<Item = Point>, style: &str) {
        let pts = self.points(pts);
        let _ = writeln!(self.out, r#"<polygon points="{pts}" {style}/>"#);
    }

    fn circle(&mut self, p: Point, r: f64, style: &str) {
        let (x, y) = self.xy(p);
        let _ = writeln!(self.out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.1}" {style}/>"#);
    }
}

/// SVG text for `result` planned in `scenario`.
///
/// Shows the occupied cells, the reference path, the control polygon with the
/// tree edges from each placed point to its two parents, the sampled path,
/// and the body at every 32nd sample. Feasible paths are green and infeasible
/// ones orange; colliding bodies and samples over the curvature bound are red.
pub fn render_svg(scenario: &Scenario, result: &PlanResult) -> Result<String> {
    let grid = &scenario.grid;
    let (wm, hm) = grid.extent();
    let mut c = Canvas {
        origin: grid.origin(),
        height_m: hm,
        out: String::new(),
    };
    let _ = writeln!(
        c.out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        wm * SCALE,
        hm * SCALE,
        wm * SCALE,
        hm * SCALE
    );
    let _ = writeln!(c.out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);

    // occupied cells, merged into horizontal runs
    let res = grid.resolution();
    let _ = writeln!(c.out, r##"<g fill="#404040">"##);
    for cy in 0..grid.height() {
        let mut cx = 0;
        while cx < grid.width() {
            if !grid.is_occupied(cx, cy) {
                cx += 1;
                continue;
            }
            let start = cx;
            while cx < grid.width() && grid.is_occupied(cx, cy) {
                cx += 1;
            }
            let top_left = grid.origin() + Point::new(start as f64 * res, (cy + 1) as f64 * res);
            let (x, y) = c.xy(top_left);
            let _ = writeln!(
                c.out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}"/>"#,
                (cx - start) as f64 * res * SCALE,
                res * SCALE
            );
        }
    }
    let _ = writeln!(c.out, "</g>");

    if let Some(reference) = scenario.reference() {
        c.polyline(
            reference.points().iter().copied(),
            r##"stroke="#9a9a9a" stroke-width="2" stroke-dasharray="6 4""##,
        );
    }

    let samples = &result.samples;
    let colliding = sample_collisions(samples, grid, &scenario.vehicle);
    let headings = samples.headings();
    for i in (0..samples.len()).step_by(FOOTPRINT_STRIDE).chain(std::iter::once(samples.len() - 1)) {
        let fp = footprint_at(samples.positions[i], headings[i], &scenario.vehicle);
        let style = if colliding[i] {
            r##"fill="#e03030" fill-opacity="0.25" stroke="#e03030" stroke-width="1""##
        } else {
            r##"fill="none" stroke="#4a7fb0" stroke-opacity="0.6" stroke-width="1""##
        };
        c.polygon(fp.corners, style);
    }

    let pts = result.polygon.points();
    let layout = tree_layout(result.phi.depth())?;
    for node in layout.nodes() {
        for parent in [node.left, node.right] {
            c.polyline([pts[parent], pts[node.index]], r##"stroke="#b0c4ff" stroke-width="1""##);
        }
    }
    c.polyline(pts.iter().copied(), r##"stroke="#2050c0" stroke-width="1.5""##);
    for p in pts {
        c.circle(*p, 3.0, r##"fill="#2050c0""##);
    }

    let path_color = if result.verdict.feasible { "#20a040" } else { "#f08020" };
    c.polyline(
        samples.positions.iter().copied(),
        &format!(r#"stroke="{path_color}" stroke-width="2.5""#),
    );
    let kappa_max = scenario.vehicle.kappa_max;
    for ((p, k), hit) in samples.positions.iter().zip(&samples.curvature).zip(&colliding) {
        if *hit || k.abs() > kappa_max + 1e-9 {
            c.circle(*p, 2.0, r##"fill="#e03030""##);
        }
    }
    c.circle(scenario.start.position(), 5.0, r##"fill="none" stroke="#000000" stroke-width="2""##);
    c.circle(scenario.goal.position(), 5.0, r##"fill="#000000""##);

    let v = &result.verdict;
    let _ = writeln!(
        c.out,
        r#"<text x="8" y="20" font-family="monospace" font-size="14">{} feasible={} collision_free={} curvature_ok={} monotone={} max_kappa={:.4}</text>"#,
        scenario.id,
        v.feasible,
        v.collision_free,
        v.curvature_ok,
        v.monotone,
        samples.max_abs_curvature()
    );
    let _ = writeln!(c.out, "</svg>");
    Ok(c.out)
}

/// Writes [`render_svg`] output to `path`.
pub fn render(result: &PlanResult, scenario: &Scenario, path: &Path) -> Result<()> {
    write_file(path, render_svg(scenario, result)?.as_bytes())
}
