//! From a planning problem and a latent vector to a control polygon.
//!
//! Five control points come from the boundary conditions: `p0, p1, p2` pin
//! the start position, heading and curvature, `p[N-2], p[N-1]` pin the goal
//! position and heading. The remaining `2^D - 1` points form a binary tree
//! over the index interval `[2, N-2]`. A node `i` with parents `j < i < k`
//! is placed in the axis-aligned square of side
//! `d = max(|x_j - x_k|, |y_j - y_k|)` centered between its parents:
//!
//! ```text
//! p_i = (p_j + p_k) / 2 + d / 2 * (phi[2(i-3)], phi[2(i-3)+1])
//! ```
//!
//! Points are placed root first, level by level, so every parent exists when
//! its children are placed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{make_knots, path_degree, ControlPolygon, KnotVector, Point};

/// Planar vehicle pose with path curvature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    /// m
    pub x: f64,
    /// m
    pub y: f64,
    /// Heading in radians.
    pub theta: f64,
    /// Signed curvature in 1/m.
    pub kappa: f64,
}

impl Configuration {
    pub fn new(x: f64, y: f64, theta: f64, kappa: f64) -> Self {
        Self { x, y, theta, kappa }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn direction(&self) -> Point {
        Point::new(self.theta.cos(), self.theta.sin())
    }

    pub fn translated(&self, by: Point) -> Self {
        Self {
            x: self.x + by.x,
            y: self.y + by.y,
            ..*self
        }
    }
}

/// Distance from `p0` to `p1` (and from `p[N-2]` to `p[N-1]`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum HeadingScale {
    /// `|qd - q0| / (N - 1)`, the spacing of a uniform polygon.
    #[default]
    Uniform,
    Fixed { start: f64, goal: f64 },
}

impl HeadingScale {
    fn resolve(self, q0: &Configuration, qd: &Configuration, num_points: usize) -> (f64, f64) {
        match self {
            HeadingScale::Uniform => {
                let s = (qd.position() - q0.position()).norm() / (num_points - 1) as f64;
                (s, s)
            }
            HeadingScale::Fixed { start, goal } => (start, goal),
        }
    }
}

/// Number of control points for tree depth `depth`: 5 boundary points plus `2^D - 1` tree points.
pub fn num_control_points(depth: usize) -> usize {
    4 + (1 << depth)
}

/// Latent vector length for tree depth `depth`.
pub fn latent_len(depth: usize) -> usize {
    2 * ((1 << depth) - 1)
}

/// The latent vector `phi`, two entries per tree point, each in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentParams {
    depth: usize,
    phi: Vec<f64>,
}

impl LatentParams {
    pub fn new(depth: usize, phi: Vec<f64>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Contract("tree depth must be at least 1".into()));
        }
        if phi.len() != latent_len(depth) {
            return Err(Error::Contract(format!(
                "depth {depth} needs {} latent values, got {}",
                latent_len(depth),
                phi.len()
            )));
        }
        if let Some(v) = phi.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("latent value {v} outside [-1, 1]")));
        }
        Ok(Self { depth, phi })
    }

    pub fn zeros(depth: usize) -> Self {
        Self {
            depth,
            phi: vec![0.0; latent_len(depth)],
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn into_values(self) -> Vec<f64> {
        self.phi
    }

    /// Offsets used for control point `index`.
    pub fn pair(&self, index: usize) -> [f64; 2] {
        let k = 2 * (index - 3);
        [self.phi[k], self.phi[k + 1]]
    }
}

/// Tree node: control point `index` placed between `left` and `right`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub index: usize,
    pub left: usize,
    pub right: usize,
}

/// Breadth-first placement order of the control-point tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeLayout {
    depth: usize,
    nodes: Vec<TreeNode>,
}

impl TreeLayout {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn num_points(&self) -> usize {
        num_control_points(self.depth)
    }
}

/// Midpoint recursion over the index interval `[2, N-2]`.
pub fn tree_layout(depth: usize) -> Result<TreeLayout> {
    if depth == 0 {
        return Err(Error::Contract("tree depth must be at least 1".into()));
    }
    let n = num_control_points(depth);
    let mut nodes = Vec::with_capacity((1 << depth) - 1);
    let mut level = vec![(2, n - 2)];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(level.len() * 2);
        for (left, right) in level {
            let index = (left + right) / 2;
            nodes.push(TreeNode { index, left, right });
            next.push((left, index));
            next.push((index, right));
        }
        level = next;
    }
    Ok(TreeLayout { depth, nodes })
}

/// Places a point in the square spanned by `pj` and `pk`.
pub fn place_point(pj: Point, pk: Point, phi_pair: [f64; 2]) -> Point {
    let d = (pj.x - pk.x).abs().max((pj.y - pk.y).abs());
    (pj + pk) / 2.0 + Point::new(phi_pair[0], phi_pair[1]) * (d / 2.0)
}

/// The five boundary-determined control points `[p0, p1, p2, p[N-2], p[N-1]]`.
///
/// `p2 = p1 + s0 * t + h * n` with `t` the start heading and `n` its left
/// normal. For a clamped spline the start curvature is
/// `(p-1) * h * u[p+1] / (p * u[p+2] * s0^2)`, which fixes `h`.
pub fn boundary_control_points(
    q0: &Configuration,
    qd: &Configuration,
    num_points: usize,
    knots: &KnotVector,
    scale: HeadingScale,
) -> Result<[Point; 5]> {
    if num_points < 6 {
        return Err(Error::Contract(format!(
            "need at least 6 control points, got {num_points}"
        )));
    }
    if knots.num_points() != num_points {
        return Err(Error::Contract(format!(
            "knots describe {} control points, expected {num_points}",
            knots.num_points()
        )));
    }
    let p = knots.degree();
    if p < 2 {
        return Err(Error::Construction(
            "start curvature needs a spline of degree 2 or more".into(),
        ));
    }
    let (start, goal) = (q0.position(), qd.position());
    if (goal - start).norm() == 0.0 {
        return Err(Error::DegenerateProblem(
            "start and goal positions coincide".into(),
        ));
    }
    let (s0, s1) = scale.resolve(q0, qd, num_points);
    let u = knots.knots();
    let (pf, u1, u2) = (p as f64, u[p + 1], u[p + 2]);
    let h = q0.kappa * pf * s0 * s0 * u2 / ((pf - 1.0) * u1);

    let tangent = q0.direction();
    let normal = Point::new(-tangent.y, tangent.x);
    let p1 = start + tangent * s0;
    let p2 = p1 + tangent * s0 + normal * h;
    let pn2 = goal - qd.direction() * s1;
    Ok([start, p1, p2, pn2, goal])
}

/// Reusable builder for one tree depth.
#[derive(Clone, Debug)]
pub struct PathBuilder {
    layout: TreeLayout,
    knots: KnotVector,
    scale: HeadingScale,
}

impl PathBuilder {
    pub fn new(depth: usize) -> Result<Self> {
        let layout = tree_layout(depth)?;
        let n = layout.num_points();
        let knots = make_knots(path_degree(n), n)?;
        Ok(Self {
            layout,
            knots,
            scale: HeadingScale::default(),
        })
    }

    pub fn with_scale(mut self, scale: HeadingScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn depth(&self) -> usize {
        self.layout.depth
    }

    pub fn num_points(&self) -> usize {
        self.layout.num_points()
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn layout(&self) -> &TreeLayout {
        &self.layout
    }

    pub fn scale(&self) -> HeadingScale {
        self.scale
    }

    fn check(&self, phi: &LatentParams) -> Result<()> {
        if phi.depth() != self.depth() {
            return Err(Error::Contract(format!(
                "latent depth {} does not match builder depth {}",
                phi.depth(),
                self.depth()
            )));
        }
        Ok(())
    }

    fn boundary(&self, q0: &Configuration, qd: &Configuration) -> Result<Vec<Point>> {
        let n = self.num_points();
        let [p0, p1, p2, pn2, pn1] = boundary_control_points(q0, qd, n, &self.knots, self.scale)?;
        let mut points = vec![Point::zeros(); n];
        points[0] = p0;
        points[1] = p1;
        points[2] = p2;
        points[n - 2] = pn2;
        points[n - 1] = pn1;
        Ok(points)
    }

    pub fn build(
        &self,
        q0: &Configuration,
        qd: &Configuration,
        phi: &LatentParams,
    ) -> Result<ControlPolygon> {
        self.check(phi)?;
        let mut points = self.boundary(q0, qd)?;
        for node in &self.layout.nodes {
            points[node.index] =
                place_point(points[node.left], points[node.right], phi.pair(node.index));
        }
        ControlPolygon::new(points)
    }

    /// Jacobian of the control-point coordinates with respect to `phi`.
    ///
    /// Row `2i` holds `d x_i / d phi`, row `2i + 1` holds `d y_i / d phi`.
    /// The side length `d` takes its x-branch on ties, and `sign(0) = 0`.
    pub fn jacobian(
        &self,
        q0: &Configuration,
        qd: &Configuration,
        phi: &LatentParams,
    ) -> Result<DMatrix<f64>> {
        self.check(phi)?;
        let mut points = self.boundary(q0, qd)?;
        let m = phi.values().len();
        let mut jac = DMatrix::<f64>::zeros(2 * self.num_points(), m);
        for node in &self.layout.nodes {
            let (pj, pk) = (points[node.left], points[node.right]);
            let pair = phi.pair(node.index);
            let (dx, dy) = (pj.x - pk.x, pj.y - pk.y);
            let (axis, diff) = if dx.abs() >= dy.abs() { (0, dx) } else { (1, dy) };
            let d = diff.abs();
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            for col in 0..m {
                let dd = sign
                    * (jac[(2 * node.left + axis, col)] - jac[(2 * node.right + axis, col)]);
                for c in 0..2 {
                    jac[(2 * node.index + c, col)] = 0.5
                        * (jac[(2 * node.left + c, col)] + jac[(2 * node.right + c, col)])
                        + 0.5 * pair[c] * dd;
                }
            }
            let k = 2 * (node.index - 3);
            jac[(2 * node.index, k)] += d / 2.0;
            jac[(2 * node.index + 1, k + 1)] += d / 2.0;
            points[node.index] = place_point(pj, pk, pair);
        }
        Ok(jac)
    }

    /// Pulls a gradient with respect to the control points back to `phi`.
    pub fn pullback(
        &self,
        q0: &Configuration,
        qd: &Configuration,
        phi: &LatentParams,
        point_grads: &[Point],
    ) -> Result<Vec<f64>> {
        let jac = self.jacobian(q0, qd, phi)?;
        Ok((0..jac.ncols())
            .map(|col| {
                point_grads
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g.x * jac[(2 * i, col)] + g.y * jac[(2 * i + 1, col)])
                    .sum()
            })
            .collect())
    }
}

/// Control polygon for `phi`; the knot vector fixes the control-point count.
pub fn build_polygon(
    q0: &Configuration,
    qd: &Configuration,
    phi: &LatentParams,
    knots: &KnotVector,
) -> Result<ControlPolygon> {
    builder_for(phi, knots)?.build(q0, qd, phi)
}

/// Jacobian of all control-point coordinates with respect to `phi`.
pub fn polygon_gradient(
    q0: &Configuration,
    qd: &Configuration,
    phi: &LatentParams,
    knots: &KnotVector,
) -> Result<DMatrix<f64>> {
    builder_for(phi, knots)?.jacobian(q0, qd, phi)
}

fn builder_for(phi: &LatentParams, knots: &KnotVector) -> Result<PathBuilder> {
    let builder = PathBuilder::new(phi.depth())?;
    if knots.num_points() != builder.num_points() {
        return Err(Error::Contract(format!(
            "depth {} needs {} control points, knots describe {}",
            phi.depth(),
            builder.num_points(),
            knots.num_points()
        )));
    }
    Ok(PathBuilder {
        knots: knots.clone(),
        ..builder
    })
}
