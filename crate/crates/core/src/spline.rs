//! Clamped B-splines: knot vectors, Cox–de Boor basis evaluation, derivative
//! splines and batched sampling of planar paths.
//!
//! Sampling goes through precomputed [`BasisMatrix`] values, so positions and
//! both derivatives are linear maps of the control points. [`SplineBasis`]
//! bundles the three maps for one `(control points, samples)` pair; building
//! it once and reusing it across planning calls is what keeps planning cheap.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::Vector2;

use crate::error::{Error, Result};

/// Planar point or vector, in meters.
pub type Point = Vector2<f64>;

/// Degree used for planned paths.
pub const PATH_DEGREE: usize = 7;

/// Number of curvature samples taken along a path.
pub const DEFAULT_SAMPLES: usize = 1024;

/// Below this first-derivative magnitude (m per unit parameter) a sample is a cusp.
pub const VELOCITY_FLOOR: f64 = 1e-6;

/// Degree of the path spline for a polygon of `num_points` control points.
///
/// Paths are degree 7 whenever there are enough control points; smaller
/// polygons fall back to the Bézier curve of degree `num_points - 1`.
pub fn path_degree(num_points: usize) -> usize {
    PATH_DEGREE.min(num_points.saturating_sub(1))
}

/// A clamped knot vector with uniformly spaced interior knots.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Clamped-uniform knots for `num_points` control points.
    pub fn clamped_uniform(degree: usize, num_points: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Construction("degree must be at least 1".into()));
        }
        if num_points < degree + 1 {
            return Err(Error::Construction(format!(
                "degree {degree} needs at least {} control points, got {num_points}",
                degree + 1
            )));
        }
        let interior = num_points - degree - 1;
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(Self { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of control points this knot vector supports.
    pub fn num_points(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Knots of the derivative spline: first and last knot dropped, degree lowered.
    pub fn derivative(&self) -> Result<KnotVector> {
        if self.degree == 0 {
            return Err(Error::Construction(
                "cannot differentiate a degree-0 spline".into(),
            ));
        }
        Ok(KnotVector {
            degree: self.degree - 1,
            knots: self.knots[1..self.knots.len() - 1].to_vec(),
        })
    }

    /// Index `s` of the knot span with `u_s <= t < u_{s+1}`; `t = 1` maps to the last span.
    fn span(&self, t: f64) -> usize {
        let n = self.num_points() - 1;
        let p = self.degree;
        if t >= self.knots[n + 1] {
            return n;
        }
        let (mut low, mut high) = (p, n + 1);
        let mut mid = (low + high) / 2;
        while t < self.knots[mid] || t >= self.knots[mid + 1] {
            if t < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
            mid = (low + high) / 2;
        }
        mid
    }

    /// Nonzero basis values `N_{span-p..=span}(t)` by the Cox–de Boor triangle.
    fn nonzero_basis(&self, span: usize, t: f64) -> Vec<f64> {
        let p = self.degree;
        let u = &self.knots;
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        values
    }
}

/// Clamped-uniform knot vector; see [`KnotVector::clamped_uniform`].
pub fn make_knots(degree: usize, num_points: usize) -> Result<KnotVector> {
    KnotVector::clamped_uniform(degree, num_points)
}

/// Ordered B-spline control points.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPolygon {
    points: Vec<Point>,
}

impl ControlPolygon {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Construction(format!(
                "control point {i} is not finite"
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// Dense `S x N` matrix of basis values, stored row-major with the nonzero
/// column range of every row.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    support: Vec<Range<usize>>,
}

impl BasisMatrix {
    fn from_dense(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        let support = (0..rows)
            .map(|i| {
                let row = &data[i * cols..(i + 1) * cols];
                let first = row.iter().position(|v| *v != 0.0).unwrap_or(0);
                let last = row.iter().rposition(|v| *v != 0.0).map_or(0, |l| l + 1);
                first..last.max(first)
            })
            .collect();
        Self {
            rows,
            cols,
            data,
            support,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Row-wise weighted sums of `points`.
    pub fn apply(&self, points: &[Point]) -> Vec<Point> {
        debug_assert_eq!(points.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                self.support[i]
                    .clone()
                    .fold(Point::zeros(), |acc, j| acc + points[j] * row[j])
            })
            .collect()
    }

    /// Accumulates `self^T * grads` into `out`.
    pub fn apply_transpose_into(&self, grads: &[Point], out: &mut [Point]) {
        debug_assert_eq!(grads.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (i, g) in grads.iter().enumerate() {
            if g.x == 0.0 && g.y == 0.0 {
                continue;
            }
            let row = self.row(i);
            for j in self.support[i].clone() {
                out[j] += g * row[j];
            }
        }
    }

    /// Matrix product `self * rhs` where `rhs` is `cols x rhs_cols`, row-major.
    fn compose(&self, rhs: &[f64], rhs_cols: usize) -> BasisMatrix {
        let mut data = vec![0.0; self.rows * rhs_cols];
        for i in 0..self.rows {
            let row = self.row(i);
            for k in self.support[i].clone() {
                let a = row[k];
                for j in 0..rhs_cols {
                    data[i * rhs_cols + j] += a * rhs[k * rhs_cols + j];
                }
            }
        }
        BasisMatrix::from_dense(self.rows, rhs_cols, data)
    }
}

/// Basis function values of `knots` at every parameter in `params`.
pub fn basis_matrix(params: &[f64], knots: &KnotVector) -> Result<BasisMatrix> {
    let cols = knots.num_points();
    let p = knots.degree;
    let mut data = vec![0.0; params.len() * cols];
    for (i, &t) in params.iter().enumerate() {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("parameter {t} outside [0, 1]")));
        }
        let span = knots.span(t);
        let values = knots.nonzero_basis(span, t);
        let row = &mut data[i * cols..(i + 1) * cols];
        row[span - p..=span].copy_from_slice(&values);
    }
    Ok(BasisMatrix::from_dense(params.len(), cols, data))
}

/// Linear map from control points to derivative control points, `(N-1) x N` row-major.
fn derivative_operator(knots: &KnotVector) -> Result<Vec<f64>> {
    let p = knots.degree;
    let n = knots.num_points();
    if p == 0 {
        return Err(Error::Construction(
            "cannot differentiate a degree-0 spline".into(),
        ));
    }
    let u = &knots.knots;
    let mut op = vec![0.0; (n - 1) * n];
    for i in 0..n - 1 {
        let span = u[i + p + 1] - u[i + 1];
        if span <= 0.0 {
            return Err(Error::Construction(format!(
                "zero knot span at derivative point {i}"
            )));
        }
        let c = p as f64 / span;
        op[i * n + i] = -c;
        op[i * n + i + 1] = c;
    }
    Ok(op)
}

/// Control polygon and knots of the derivative spline.
pub fn derivative_polygon(
    polygon: &ControlPolygon,
    knots: &KnotVector,
) -> Result<(ControlPolygon, KnotVector)> {
    if polygon.len() != knots.num_points() {
        return Err(Error::Contract(format!(
            "polygon has {} points, knots expect {}",
            polygon.len(),
            knots.num_points()
        )));
    }
    let op = derivative_operator(knots)?;
    let n = polygon.len();
    let points = (0..n - 1)
        .map(|i| {
            (0..n).fold(Point::zeros(), |acc, j| {
                acc + polygon.points[j] * op[i * n + j]
            })
        })
        .collect();
    Ok((ControlPolygon { points }, knots.derivative()?))
}

/// Positions, derivatives and curvature sampled along a path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSamples {
    pub positions: Vec<Point>,
    pub first_deriv: Vec<Point>,
    pub second_deriv: Vec<Point>,
    /// Signed curvature in 1/m; clamped at cusp samples.
    pub curvature: Vec<f64>,
    /// Distance to the previous sample; the first entry is 0.
    pub seg_lengths: Vec<f64>,
    /// Samples whose first derivative fell below [`VELOCITY_FLOOR`].
    pub degenerate: Vec<bool>,
}

impl PathSamples {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.curvature.iter().fold(0.0, |m, k| m.max(k.abs()))
    }

    /// Polyline length through the samples.
    pub fn length(&self) -> f64 {
        self.seg_lengths.iter().sum()
    }

    pub fn has_cusp(&self) -> bool {
        self.degenerate.iter().any(|d| *d)
    }

    /// For every sample, the sample whose tangent provides its heading.
    ///
    /// Cusp samples borrow the heading of the closest earlier regular sample
    /// (or the first later one at the very start).
    pub fn heading_sources(&self) -> Vec<usize> {
        let first_regular = self.degenerate.iter().position(|d| !d).unwrap_or(0);
        let mut last = first_regular;
        self.degenerate
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if !d {
                    last = i;
                }
                last
            })
            .collect()
    }

    /// Tangent heading at each sample, in radians.
    pub fn headings(&self) -> Vec<f64> {
        self.heading_sources()
            .into_iter()
            .map(|s| self.first_deriv[s].y.atan2(self.first_deriv[s].x))
            .collect()
    }
}

/// Signed curvature from first and second derivatives, or `None` at a cusp.
pub fn curvature_of(d1: &Point, d2: &Point) -> Option<f64> {
    let speed_sq = d1.norm_squared();
    if speed_sq.sqrt() < VELOCITY_FLOOR {
        return None;
    }
    Some((d1.x * d2.y - d1.y * d2.x) / (speed_sq * speed_sq.sqrt()))
}

/// Precomputed position, velocity and acceleration maps for sampling a path
/// with a fixed number of control points at `S` uniform parameters.
#[derive(Debug)]
pub struct SplineBasis {
    knots: KnotVector,
    params: Vec<f64>,
    position: BasisMatrix,
    velocity: BasisMatrix,
    acceleration: BasisMatrix,
}

impl SplineBasis {
    /// Basis for `num_points` control points of degree [`path_degree`].
    pub fn new(num_points: usize, samples: usize) -> Result<Self> {
        let knots = make_knots(path_degree(num_points), num_points)?;
        Self::with_knots(knots, samples)
    }

    pub fn with_knots(knots: KnotVector, samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 samples, got {samples}"
            )));
        }
        if knots.degree() < 2 {
            return Err(Error::Construction(
                "curvature needs a spline of degree 2 or more".into(),
            ));
        }
        let n = knots.num_points();
        let params: Vec<f64> = (0..samples)
            .map(|i| i as f64 / (samples - 1) as f64)
            .collect();
        let d1_knots = knots.derivative()?;
        let d2_knots = d1_knots.derivative()?;

        let position = basis_matrix(&params, &knots)?;
        let d1_op = derivative_operator(&knots)?;
        let d2_op = derivative_operator(&d1_knots)?;
        // second-derivative points as a map from the original N points
        let mut d2_full = vec![0.0; (n - 2) * n];
        for i in 0..n - 2 {
            for k in 0..n - 1 {
                let a = d2_op[i * (n - 1) + k];
                if a != 0.0 {
                    for j in 0..n {
                        d2_full[i * n + j] += a * d1_op[k * n + j];
                    }
                }
            }
        }
        let velocity = basis_matrix(&params, &d1_knots)?.compose(&d1_op, n);
        let acceleration = basis_matrix(&params, &d2_knots)?.compose(&d2_full, n);
        Ok(Self {
            knots,
            params,
            position,
            velocity,
            acceleration,
        })
    }

    /// Process-wide cached basis for `(num_points, samples)`.
    pub fn shared(num_points: usize, samples: usize) -> Result<Arc<SplineBasis>> {
        type Cache = Mutex<HashMap<(usize, usize), Arc<SplineBasis>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(basis) = cache.lock().unwrap().get(&(num_points, samples)) {
            return Ok(basis.clone());
        }
        let basis = Arc::new(SplineBasis::new(num_points, samples)?);
        cache
            .lock()
            .unwrap()
            .entry((num_points, samples))
            .or_insert(basis.clone());
        Ok(basis)
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn num_points(&self) -> usize {
        self.knots.num_points()
    }

    pub fn num_samples(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn position(&self) -> &BasisMatrix {
        &self.position
    }

    pub fn velocity(&self) -> &BasisMatrix {
        &self.velocity
    }

    pub fn acceleration(&self) -> &BasisMatrix {
        &self.acceleration
    }

    /// Samples `polygon`; cusp samples get curvature `±cusp_curvature`.
    pub fn sample(&self, polygon: &ControlPolygon, cusp_curvature: f64) -> Result<PathSamples> {
        if polygon.len() != self.num_points() {
            return Err(Error::Contract(format!(
                "polygon has {} points, basis expects {}",
                polygon.len(),
                self.num_points()
            )));
        }
        let pts = polygon.points();
        let positions = self.position.apply(pts);
        let first_deriv = self.velocity.apply(pts);
        let second_deriv = self.acceleration.apply(pts);
        let mut degenerate = vec![false; positions.len()];
        let curvature = first_deriv
            .iter()
            .zip(&second_deriv)
            .enumerate()
            .map(|(i, (d1, d2))| match curvature_of(d1, d2) {
                Some(k) => k,
                None => {
                    degenerate[i] = true;
                    let cross = d1.x * d2.y - d1.y * d2.x;
                    if cross < 0.0 {
                        -cusp_curvature
                    } else {
                        cusp_curvature
                    }
                }
            })
            .collect();
        let seg_lengths = std::iter::once(0.0)
            .chain(positions.windows(2).map(|w| (w[1] - w[0]).norm()))
            .collect();
        Ok(PathSamples {
            positions,
            first_deriv,
            second_deriv,
            curvature,
            seg_lengths,
            degenerate,
        })
    }
}

/// Samples a path at `samples` uniform parameters with a freshly built basis.
pub fn sample_path(
    polygon: &ControlPolygon,
    knots: &KnotVector,
    samples: usize,
    cusp_curvature: f64,
) -> Result<PathSamples> {
    SplineBasis::with_knots(knots.clone(), samples)?.sample(polygon, cusp_curvature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn polygon(points: &[(f64, f64)]) -> ControlPolygon {
        ControlPolygon::new(points.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn clamped_uniform_knots() {
        let k = make_knots(7, 12).unwrap();
        let mut expected = vec![0.0; 8];
        expected.extend([0.2, 0.4, 0.6, 0.8]);
        expected.extend([1.0; 8]);
        for (a, b) in k.knots().iter().zip(&expected) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
        assert_eq!(k.knots().len(), expected.len());

        let bezier = make_knots(7, 8).unwrap();
        assert_eq!(bezier.knots(), [[0.0; 8], [1.0; 8]].concat().as_slice());
        assert_eq!(
            make_knots(3, 4).unwrap().knots(),
            &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]
        );
        assert!(matches!(make_knots(7, 7), Err(Error::Construction(_))));
    }

    #[test]
    fn basis_endpoints_and_hat_functions() {
        let k = make_knots(7, 12).unwrap();
        let m = basis_matrix(&[0.0, 1.0], &k).unwrap();
        assert_eq!(m.row(0)[0], 1.0);
        assert!(m.row(0)[1..].iter().all(|v| *v == 0.0));
        assert_eq!(m.row(1)[11], 1.0);
        assert!(m.row(1)[..11].iter().all(|v| *v == 0.0));

        let linear = KnotVector {
            degree: 1,
            knots: vec![0.0, 0.0, 0.5, 1.0, 1.0],
        };
        let m = basis_matrix(&[0.25], &linear).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn basis_rejects_out_of_range_parameters() {
        let k = make_knots(3, 5).unwrap();
        assert!(matches!(basis_matrix(&[1.5], &k), Err(Error::Domain(_))));
        assert!(matches!(basis_matrix(&[-1e-9], &k), Err(Error::Domain(_))));
    }

    #[test]
    fn derivative_polygon_examples() {
        let k = make_knots(2, 3).unwrap();
        let (d, dk) = derivative_polygon(&polygon(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]), &k).unwrap();
        assert_eq!(d.points(), &[Point::new(2.0, 0.0), Point::new(0.0, 2.0)]);
        assert_eq!(dk.degree(), 1);
        assert_eq!(dk.knots(), &[0.0, 0.0, 1.0, 1.0]);

        let k = make_knots(7, 12).unwrap();
        let constant = polygon(&[(3.0, -1.0); 12]);
        let (d, _) = derivative_polygon(&constant, &k).unwrap();
        assert!(d.points().iter().all(|p| p.norm() == 0.0));

        let line: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, 0.0)).collect();
        let (d, _) = derivative_polygon(&polygon(&line), &k).unwrap();
        assert!(d.points().iter().all(|p| p.y == 0.0 && p.x > 0.0));
        // clamped-uniform derivative of a uniform polygon is uniform on the interior only
        assert_abs_diff_eq!(d.points()[4].x, d.points()[5].x, epsilon = 1e-12);

        let bezier: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, 0.0)).collect();
        let (d, _) = derivative_polygon(&polygon(&bezier), &make_knots(7, 8).unwrap()).unwrap();
        assert!(d.points().iter().all(|p| *p == Point::new(7.0, 0.0)));
    }

    #[test]
    fn straight_polygon_samples_on_segment() {
        let line: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, 0.0)).collect();
        let basis = SplineBasis::new(12, DEFAULT_SAMPLES).unwrap();
        let s = basis.sample(&polygon(&line), 2.27).unwrap();
        assert_eq!(s.len(), 1024);
        assert_eq!(s.positions[0], Point::new(0.0, 0.0));
        assert_abs_diff_eq!(s.positions[1023].x, 11.0, epsilon = 1e-12);
        for (p, k) in s.positions.iter().zip(&s.curvature) {
            assert_eq!(p.y, 0.0);
            assert!((-1e-12..=11.0 + 1e-12).contains(&p.x));
            assert_eq!(*k, 0.0);
        }
        assert_eq!(s.seg_lengths[0], 0.0);
        assert_abs_diff_eq!(s.length(), 11.0, epsilon = 1e-9);
    }

    #[test]
    fn cusp_samples_are_flagged_and_clamped() {
        let constant = polygon(&[(1.0, 1.0); 12]);
        let s = sample_path(&constant, &make_knots(7, 12).unwrap(), 16, 2.27).unwrap();
        assert!(s.degenerate.iter().all(|d| *d));
        assert!(s.curvature.iter().all(|k| *k == 2.27));
        assert!(s.has_cusp());
    }

    #[test]
    fn sample_rejects_mismatched_polygon() {
        let basis = SplineBasis::new(12, 8).unwrap();
        let short = polygon(&[(0.0, 0.0); 8]);
        assert!(matches!(basis.sample(&short, 1.0), Err(Error::Contract(_))));
        assert!(matches!(SplineBasis::new(12, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn shared_basis_is_reused() {
        let a = SplineBasis::shared(20, 64).unwrap();
        let b = SplineBasis::shared(20, 64).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn small_polygons_fall_back_to_bezier() {
        assert_eq!(path_degree(6), 5);
        assert_eq!(path_degree(8), 7);
        assert_eq!(path_degree(20), 7);
        let basis = SplineBasis::new(6, 32).unwrap();
        assert_eq!(basis.knots().degree(), 5);
    }

    fn arb_polygon(n: usize) -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), n)
            .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn rows_form_partition_of_unity(t in prop::collection::vec(0.0..=1.0f64, 1..20), n in 8usize..24) {
            let k = make_knots(7, n).unwrap();
            let m = basis_matrix(&t, &k).unwrap();
            for i in 0..m.rows() {
                let row = m.row(i);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|v| *v >= 0.0));
                prop_assert!(row.iter().filter(|v| **v != 0.0).count() <= 8);
            }
        }

        #[test]
        fn sampling_is_linear(p in arb_polygon(12), q in arb_polygon(12), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let basis = SplineBasis::shared(12, 128).unwrap();
            let mix: Vec<Point> = p.iter().zip(&q).map(|(x, y)| x * a + y * b).collect();
            let sp = basis.sample(&ControlPolygon::new(p).unwrap(), 1.0).unwrap();
            let sq = basis.sample(&ControlPolygon::new(q).unwrap(), 1.0).unwrap();
            let sm = basis.sample(&ControlPolygon::new(mix).unwrap(), 1.0).unwrap();
            for i in 0..sm.len() {
                let expect = sp.positions[i] * a + sq.positions[i] * b;
                prop_assert!((sm.positions[i] - expect).norm() < 1e-9);
            }
        }

        #[test]
        fn analytic_velocity_matches_finite_differences(p in arb_polygon(12), t in 0.01..0.99f64) {
            let polygon = ControlPolygon::new(p).unwrap();
            let knots = make_knots(7, 12).unwrap();
            let h = 1e-6;
            let m = basis_matrix(&[t - h, t + h], &knots).unwrap();
            let pos = m.apply(polygon.points());
            let fd = (pos[1] - pos[0]) / (2.0 * h);
            let (dpoly, dknots) = derivative_polygon(&polygon, &knots).unwrap();
            let analytic = basis_matrix(&[t], &dknots).unwrap().apply(dpoly.points())[0];
            prop_assume!(analytic.norm() > 1e-3);
            prop_assert!((fd - analytic).norm() / analytic.norm() < 1e-4);
        }
    }
}
