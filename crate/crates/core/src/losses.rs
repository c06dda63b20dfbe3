//! The differentiable feasibility loss and the hard feasibility verdict.
//!
//! ```text
//! L = L_curv + L_coll + sigma_tcurv * gamma * L_tcurv
//! L_curv  = sum_i max(|k_i| - k_max, 0)
//! L_tcurv = sum_{i>=1} |k_i - k_{i-1}|
//! L_coll  = sum_{i>=1} sigma_coll(i) * sum_{k=0..4} d(ref, P_ik) * l_i
//! ```
//!
//! `sigma_tcurv` is 1 only when the curvature and collision terms are both
//! zero. Both indicators are treated as constants when differentiating.

use std::f64::consts::{PI, TAU};

use crate::error::Result;
use crate::spline::{ControlPolygon, PathSamples, Point, SplineBasis};
use crate::world::{
    collision_indicator, footprint_at, ClearanceGuide, CollisionMask, OccupancyGrid, VehicleParams,
};

/// Weight of the gated total-curvature term.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Curvature reported at cusp samples, as a multiple of `kappa_max`.
pub const CUSP_CURVATURE_FACTOR: f64 = 10.0;

/// Slack on the curvature bound in the feasibility verdict.
pub const CURVATURE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub curv_weight: f64,
    pub coll_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            curv_weight: 1.0,
            coll_weight: 1.0,
        }
    }
}

/// Values of every loss term for one path.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub curv: f64,
    pub coll: f64,
    pub tcurv: f64,
    pub sigma_tcurv: bool,
    pub total: f64,
    pub gamma: f64,
}

impl LossBreakdown {
    /// Contribution of the gated total-curvature term.
    pub fn gated_tcurv(&self) -> f64 {
        if self.sigma_tcurv {
            self.gamma * self.tcurv
        } else {
            0.0
        }
    }
}

/// Hard feasibility of a sampled path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeasibilityVerdict {
    pub collision_free: bool,
    pub curvature_ok: bool,
    pub monotone: bool,
    pub feasible: bool,
}

impl FeasibilityVerdict {
    pub fn new(collision_free: bool, curvature_ok: bool, monotone: bool) -> Self {
        Self {
            collision_free,
            curvature_ok,
            monotone,
            feasible: collision_free && curvature_ok && monotone,
        }
    }
}

/// Hinge loss on curvature and its gradient with respect to each curvature sample.
pub fn curvature_loss(samples: &PathSamples, kappa_max: f64) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let grad = samples
        .curvature
        .iter()
        .map(|k| {
            let excess = k.abs() - kappa_max;
            if excess > 0.0 {
                total += excess;
                k.signum()
            } else {
                0.0
            }
        })
        .collect();
    (total, grad)
}

/// Total variation of the curvature samples and its subgradient.
pub fn total_curvature_loss(samples: &PathSamples) -> (f64, Vec<f64>) {
    let k = &samples.curvature;
    let mut grad = vec![0.0; k.len()];
    let mut total = 0.0;
    for i in 1..k.len() {
        let diff = k[i] - k[i - 1];
        total += diff.abs();
        let s = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad[i] += s;
        grad[i - 1] -= s;
    }
    (total, grad)
}

/// Per-sample collision indicator of the body placed along the tangent.
pub fn sample_collisions(samples: &PathSamples, grid: &OccupancyGrid, vehicle: &VehicleParams) -> Vec<bool> {
    let headings = samples.headings();
    samples
        .positions
        .iter()
        .zip(&headings)
        .map(|(p, h)| collision_indicator(&footprint_at(*p, *h, vehicle), grid))
        .collect()
}

/// [`sample_collisions`] using `mask` to skip footprints far from obstacles.
pub fn sample_collisions_masked(
    samples: &PathSamples,
    grid: &OccupancyGrid,
    vehicle: &VehicleParams,
    mask: &CollisionMask,
) -> Vec<bool> {
    let headings = samples.headings();
    samples
        .positions
        .iter()
        .zip(&headings)
        .map(|(p, h)| mask.collides(&footprint_at(*p, *h, vehicle), grid))
        .collect()
}

/// Collision loss with gradients with respect to sample positions and first derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionLoss {
    pub value: f64,
    pub grad_positions: Vec<Point>,
    pub grad_first_deriv: Vec<Point>,
}

/// Collision loss for samples whose collision flags are already known.
pub fn collision_loss_with_flags(
    samples: &PathSamples,
    colliding: &[bool],
    vehicle: &VehicleParams,
    guide: &dyn ClearanceGuide,
) -> CollisionLoss {
    let n = samples.len();
    let sources = samples.heading_sources();
    let corners = vehicle.local_corners();
    let mut value = 0.0;
    let mut grad_positions = vec![Point::zeros(); n];
    let mut grad_first_deriv = vec![Point::zeros(); n];
    for i in 1..n {
        if !colliding[i] {
            continue;
        }
        let pos = samples.positions[i];
        let d1 = samples.first_deriv[sources[i]];
        let heading = d1.y.atan2(d1.x);
        let (s, c) = heading.sin_cos();
        let l = samples.seg_lengths[i];

        let mut dist_sum = 0.0;
        let mut grad_pos = Point::zeros();
        let mut grad_heading = 0.0;
        for local in &corners {
            let r = Point::new(c * local.x - s * local.y, s * local.x + c * local.y);
            let (d, g) = guide.distance(pos + r);
            dist_sum += d;
            grad_pos += g;
            // d(R(theta) local)/d theta = (-r.y, r.x)
            grad_heading += g.x * -r.y + g.y * r.x;
        }
        let (d, g) = guide.distance(pos);
        dist_sum += d;
        grad_pos += g;

        value += dist_sum * l;
        grad_positions[i] += grad_pos * l;
        if l > 0.0 {
            let dl = (pos - samples.positions[i - 1]) / l;
            grad_positions[i] += dl * dist_sum;
            grad_positions[i - 1] -= dl * dist_sum;
        }
        let speed_sq = d1.norm_squared();
        if speed_sq > 0.0 {
            grad_first_deriv[sources[i]] += Point::new(-d1.y, d1.x) * (grad_heading * l / speed_sq);
        }
    }
    CollisionLoss {
        value,
        grad_positions,
        grad_first_deriv,
    }
}

/// Collision loss along a sampled path.
pub fn collision_loss(
    samples: &PathSamples,
    grid: &OccupancyGrid,
    vehicle: &VehicleParams,
    guide: &dyn ClearanceGuide,
) -> CollisionLoss {
    let colliding = sample_collisions(samples, grid, vehicle);
    collision_loss_with_flags(samples, &colliding, vehicle, guide)
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Verdict from samples and precomputed per-sample collision flags.
pub fn verdict_from(samples: &PathSamples, colliding: &[bool], kappa_max: f64) -> FeasibilityVerdict {
    let collision_free = !colliding.iter().any(|c| *c);
    let curvature_ok = samples.max_abs_curvature() <= kappa_max + CURVATURE_TOLERANCE;
    let headings = samples.headings();
    let turning: f64 = headings.windows(2).map(|w| wrap_angle(w[1] - w[0]).abs()).sum();
    let monotone = !samples.has_cusp() && turning < TAU;
    FeasibilityVerdict::new(collision_free, curvature_ok, monotone)
}

/// Collision-free, curvature-bounded and free of reversals.
pub fn feasibility(samples: &PathSamples, grid: &OccupancyGrid, vehicle: &VehicleParams) -> FeasibilityVerdict {
    verdict_from(samples, &sample_collisions(samples, grid, vehicle), vehicle.kappa_max)
}

/// Everything computed by one loss evaluation.
#[derive(Clone, Debug)]
pub struct LossEvaluation {
    pub breakdown: LossBreakdown,
    pub samples: PathSamples,
    pub colliding: Vec<bool>,
    pub verdict: FeasibilityVerdict,
    /// Gradient of the total with respect to each control point, when requested.
    pub grad_points: Option<Vec<Point>>,
}

/// Inputs shared by every loss evaluation for one problem.
#[derive(Clone, Copy)]
pub struct LossContext<'a> {
    pub basis: &'a SplineBasis,
    pub grid: &'a OccupancyGrid,
    pub vehicle: &'a VehicleParams,
    pub guide: &'a dyn ClearanceGuide,
    /// Optional shortcut for the collision flags; results are identical.
    pub mask: Option<&'a CollisionMask>,
    pub config: LossConfig,
}

impl LossContext<'_> {
    /// Loss of `polygon`, with the control-point gradient when `with_gradient` is set.
    pub fn evaluate(&self, polygon: &ControlPolygon, with_gradient: bool) -> Result<LossEvaluation> {
        let kappa_max = self.vehicle.kappa_max;
        let samples = self
            .basis
            .sample(polygon, CUSP_CURVATURE_FACTOR * kappa_max)?;
        let colliding = match self.mask {
            Some(mask) => sample_collisions_masked(&samples, self.grid, self.vehicle, mask),
            None => sample_collisions(&samples, self.grid, self.vehicle),
        };
        let (curv, curv_grad) = curvature_loss(&samples, kappa_max);
        let (tcurv, tcurv_grad) = total_curvature_loss(&samples);
        let coll = collision_loss_with_flags(&samples, &colliding, self.vehicle, self.guide);

        let cfg = self.config;
        let sigma_tcurv = curv == 0.0 && coll.value == 0.0;
        let gated = if sigma_tcurv { cfg.gamma * tcurv } else { 0.0 };
        let breakdown = LossBreakdown {
            curv,
            coll: coll.value,
            tcurv,
            sigma_tcurv,
            total: cfg.curv_weight * curv + cfg.coll_weight * coll.value + gated,
            gamma: cfg.gamma,
        };
        let verdict = verdict_from(&samples, &colliding, kappa_max);

        let grad_points = with_gradient.then(|| {
            let n = samples.len();
            let mut g_pos: Vec<Point> = coll.grad_positions.iter().map(|g| g * cfg.coll_weight).collect();
            let mut g_first: Vec<Point> = coll.grad_first_deriv.iter().map(|g| g * cfg.coll_weight).collect();
            let mut g_second = vec![Point::zeros(); n];
            for i in 0..n {
                let mut dk = cfg.curv_weight * curv_grad[i];
                if sigma_tcurv {
                    dk += cfg.gamma * tcurv_grad[i];
                }
                if dk == 0.0 || samples.degenerate[i] {
                    continue;
                }
                let (d1, d2) = (samples.first_deriv[i], samples.second_deriv[i]);
                let v2 = d1.norm_squared();
                let v3 = v2 * v2.sqrt();
                let v5 = v3 * v2;
                let cross = d1.x * d2.y - d1.y * d2.x;
                g_first[i] += Point::new(
                    d2.y / v3 - 3.0 * cross * d1.x / v5,
                    -d2.x / v3 - 3.0 * cross * d1.y / v5,
                ) * dk;
                g_second[i] += Point::new(-d1.y / v3, d1.x / v3) * dk;
            }
            let mut out = vec![Point::zeros(); polygon.len()];
            self.basis.position().apply_transpose_into(&g_pos, &mut out);
            self.basis.velocity().apply_transpose_into(&g_first, &mut out);
            self.basis.acceleration().apply_transpose_into(&g_second, &mut out);
            g_pos.clear();
            g_first.clear();
            out
        });

        Ok(LossEvaluation {
            breakdown,
            samples,
            colliding,
            verdict,
            grad_points,
        })
    }
}

/// Total loss of `polygon` and its gradient with respect to the control points.
pub fn total_loss(
    polygon: &ControlPolygon,
    basis: &SplineBasis,
    grid: &OccupancyGrid,
    vehicle: &VehicleParams,
    guide: &dyn ClearanceGuide,
    config: LossConfig,
) -> Result<(LossBreakdown, Vec<Point>)> {
    let ctx = LossContext {
        basis,
        grid,
        vehicle,
        guide,
        mask: None,
        config,
    };
    let eval = ctx.evaluate(polygon, true)?;
    Ok((eval.breakdown, eval.grad_points.unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{Configuration, LatentParams, PathBuilder};
    use crate::world::ReferencePath;
    use approx::assert_abs_diff_eq;

    struct Constant(f64);

    impl ClearanceGuide for Constant {
        fn distance(&self, _p: Point) -> (f64, Point) {
            (self.0, Point::zeros())
        }
    }

    fn with_curvature(k: Vec<f64>) -> PathSamples {
        let n = k.len();
        PathSamples {
            positions: vec![Point::zeros(); n],
            first_deriv: vec![Point::new(1.0, 0.0); n],
            second_deriv: vec![Point::zeros(); n],
            curvature: k,
            seg_lengths: vec![0.0; n],
            degenerate: vec![false; n],
        }
    }

    #[test]
    fn curvature_hinge_examples() {
        assert_eq!(curvature_loss(&with_curvature(vec![0.0; 1024]), 0.227).0, 0.0);
        let (v, _) = curvature_loss(&with_curvature(vec![0.5; 1024]), 0.227);
        assert_abs_diff_eq!(v, 279.552, epsilon = 1e-9);
        let mut k = vec![0.1; 1024];
        k[17] = -0.3;
        let (v, g) = curvature_loss(&with_curvature(k), 0.227);
        assert_abs_diff_eq!(v, 0.073, epsilon = 1e-12);
        assert_eq!(g[17], -1.0);
        assert_eq!(g.iter().filter(|x| **x != 0.0).count(), 1);
        // exactly on the bound: no loss and zero subgradient
        let (v, g) = curvature_loss(&with_curvature(vec![0.227, -0.227]), 0.227);
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn total_curvature_examples() {
        assert_eq!(total_curvature_loss(&with_curvature(vec![0.3; 50])).0, 0.0);
        assert_abs_diff_eq!(total_curvature_loss(&with_curvature(vec![0.0, 0.1, 0.0])).0, 0.2);
        for n in [2usize, 10, 1024] {
            let ramp = (0..n).map(|i| 0.2 * i as f64 / (n - 1) as f64).collect();
            assert_abs_diff_eq!(total_curvature_loss(&with_curvature(ramp)).0, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn collision_arithmetic() {
        let mut s = with_curvature(vec![0.0; 2]);
        s.positions[1] = Point::new(0.05, 0.0);
        s.seg_lengths[1] = 0.05;
        let v = VehicleParams::default();
        let loss = collision_loss_with_flags(&s, &[false, true], &v, &Constant(1.0));
        assert_abs_diff_eq!(loss.value, 0.25, epsilon = 1e-15);
        let doubled = collision_loss_with_flags(&s, &[false, true], &v, &Constant(2.0));
        assert_abs_diff_eq!(doubled.value, 0.5, epsilon = 1e-15);
        // the first sample carries no length
        assert_eq!(collision_loss_with_flags(&s, &[true, false], &v, &Constant(1.0)).value, 0.0);
    }

    fn straight_scenario() -> (PathBuilder, Configuration, Configuration) {
        (
            PathBuilder::new(3).unwrap(),
            Configuration::new(2.0, 12.8, 0.0, 0.0),
            Configuration::new(20.0, 12.8, 0.0, 0.0),
        )
    }

    #[test]
    fn straight_path_in_empty_map() {
        let (builder, q0, qd) = straight_scenario();
        let grid = OccupancyGrid::local_map();
        let vehicle = VehicleParams::default();
        let reference = ReferencePath::new(vec![q0.position(), qd.position()]).unwrap();
        let basis = SplineBasis::shared(12, 1024).unwrap();
        let polygon = builder.build(&q0, &qd, &LatentParams::zeros(3)).unwrap();
        let (b, g) = total_loss(&polygon, &basis, &grid, &vehicle, &reference, LossConfig::default()).unwrap();
        assert_eq!((b.curv, b.coll), (0.0, 0.0));
        assert!(b.sigma_tcurv);
        assert_abs_diff_eq!(b.total, 0.1 * b.tcurv);
        assert!(b.tcurv < 1e-9);
        assert_eq!(g.len(), 12);
        let samples = basis.sample(&polygon, 2.27).unwrap();
        assert!(feasibility(&samples, &grid, &vehicle).feasible);
    }

    #[test]
    fn curvature_violation_disables_gate() {
        let builder = PathBuilder::new(3).unwrap();
        let q0 = Configuration::new(4.0, 12.8, 0.0, 0.0);
        let qd = Configuration::new(8.0, 16.0, std::f64::consts::PI, 0.0);
        let grid = OccupancyGrid::local_map();
        let vehicle = VehicleParams::default();
        let reference = ReferencePath::new(vec![q0.position(), qd.position()]).unwrap();
        let basis = SplineBasis::shared(12, 1024).unwrap();
        let polygon = builder.build(&q0, &qd, &LatentParams::zeros(3)).unwrap();
        let (b, _) = total_loss(&polygon, &basis, &grid, &vehicle, &reference, LossConfig::default()).unwrap();
        assert!(b.curv > 0.0);
        assert!(!b.sigma_tcurv);
        assert_abs_diff_eq!(b.total, b.curv + b.coll);
        let samples = basis.sample(&polygon, 2.27).unwrap();
        assert!(!feasibility(&samples, &grid, &vehicle).curvature_ok);
    }

    fn finite_difference_check(polygon: &ControlPolygon, ctx: &LossContext) {
        let eval = ctx.evaluate(polygon, true).unwrap();
        let grad = eval.grad_points.unwrap();
        let h = 1e-6;
        let mut checked = 0;
        for i in 0..polygon.len() {
            for axis in 0..2 {
                let shifted = |delta: f64| {
                    let mut pts = polygon.points().to_vec();
                    pts[i][axis] += delta;
                    ctx.evaluate(&ControlPolygon::new(pts).unwrap(), false).unwrap()
                };
                let (plus, minus) = (shifted(h), shifted(-h));
                // skip coordinates where a discrete indicator switches
                if plus.colliding != eval.colliding
                    || minus.colliding != eval.colliding
                    || plus.breakdown.sigma_tcurv != eval.breakdown.sigma_tcurv
                {
                    continue;
                }
                let fd = (plus.breakdown.total - minus.breakdown.total) / (2.0 * h);
                let an = grad[i][axis];
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                    "point {i} axis {axis}: fd {fd} analytic {an}"
                );
                checked += 1;
            }
        }
        assert!(checked >= polygon.len());
    }

    #[test]
    fn curvature_gradient_matches_finite_differences() {
        let builder = PathBuilder::new(3).unwrap();
        let q0 = Configuration::new(4.0, 12.8, 0.0, 0.0);
        let qd = Configuration::new(10.0, 18.0, 1.4, 0.0);
        let grid = OccupancyGrid::local_map();
        let vehicle = VehicleParams::default();
        let reference = ReferencePath::new(vec![q0.position(), qd.position()]).unwrap();
        let basis = SplineBasis::shared(12, 1024).unwrap();
        let phi = LatentParams::new(3, (0..14).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect()).unwrap();
        let polygon = builder.build(&q0, &qd, &phi).unwrap();
        let ctx = LossContext {
            basis: &basis,
            grid: &grid,
            vehicle: &vehicle,
            guide: &reference,
            mask: None,
            config: LossConfig::default(),
        };
        assert!(ctx.evaluate(&polygon, false).unwrap().breakdown.curv > 0.0);
        finite_difference_check(&polygon, &ctx);
    }

    #[test]
    fn collision_gradient_matches_finite_differences() {
        let (builder, q0, qd) = straight_scenario();
        let mut grid = OccupancyGrid::local_map();
        grid.fill_rect(Point::new(10.0, 12.0), Point::new(12.0, 16.0));
        let vehicle = VehicleParams::default();
        let reference = ReferencePath::new(vec![
            q0.position(),
            Point::new(8.0, 8.0),
            Point::new(14.0, 8.0),
            qd.position(),
        ])
        .unwrap();
        let basis = SplineBasis::shared(12, 1024).unwrap();
        let phi = LatentParams::new(3, (0..14).map(|i| 0.1 * ((i as f64) * 1.3).cos()).collect()).unwrap();
        let polygon = builder.build(&q0, &qd, &phi).unwrap();
        let ctx = LossContext {
            basis: &basis,
            grid: &grid,
            vehicle: &vehicle,
            guide: &reference,
            mask: None,
            config: LossConfig::default(),
        };
        assert!(ctx.evaluate(&polygon, false).unwrap().breakdown.coll > 0.0);
        finite_difference_check(&polygon, &ctx);
    }

    #[test]
    fn translation_invariance() {
        let (builder, q0, qd) = straight_scenario();
        let mut grid = OccupancyGrid::local_map();
        grid.fill_rect(Point::new(10.0, 12.0), Point::new(12.0, 16.0));
        let vehicle = VehicleParams::default();
        let reference = ReferencePath::new(vec![q0.position(), Point::new(11.0, 9.0), qd.position()]).unwrap();
        let basis = SplineBasis::shared(12, 1024).unwrap();
        let phi = LatentParams::zeros(3);
        let eval = |shift: Point| {
            let g = grid.translated(shift);
            let r = reference.translated(shift);
            let polygon = builder
                .build(&q0.translated(shift), &qd.translated(shift), &phi)
                .unwrap();
            let ctx = LossContext {
                basis: &basis,
                grid: &g,
                vehicle: &vehicle,
                guide: &r,
                mask: None,
                config: LossConfig::default(),
            };
            ctx.evaluate(&polygon, false).unwrap()
        };
        let a = eval(Point::zeros());
        let b = eval(Point::new(3.0, -2.0));
        assert_eq!(a.colliding, b.colliding);
        assert_abs_diff_eq!(a.breakdown.total, b.breakdown.total, epsilon = 1e-9 * a.breakdown.total.max(1.0));
    }

    #[test]
    fn wall_clip_is_a_collision() {
        let (builder, q0, qd) = straight_scenario();
        let mut grid = OccupancyGrid::local_map();
        grid.fill_rect(Point::new(10.0, 13.4), Point::new(10.4, 14.0));
        let vehicle = VehicleParams::default();
        let basis = SplineBasis::shared(12, 1024).unwrap();
        let polygon = builder.build(&q0, &qd, &LatentParams::zeros(3)).unwrap();
        let samples = basis.sample(&polygon, 2.27).unwrap();
        let v = feasibility(&samples, &grid, &vehicle);
        assert!(!v.collision_free && v.curvature_ok && v.monotone && !v.feasible);
    }

    #[test]
    fn loops_are_not_monotone() {
        // a full circle of headings
        let n = 200;
        let mut s = with_curvature(vec![0.1; n]);
        for i in 0..n {
            let a = 1.1 * TAU * i as f64 / (n - 1) as f64;
            s.first_deriv[i] = Point::new(a.cos(), a.sin());
        }
        let v = verdict_from(&s, &vec![false; n], 0.227);
        assert!(!v.monotone && v.curvature_ok && !v.feasible);
    }

    #[test]
    fn angle_wrapping() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI);
        assert_abs_diff_eq!(wrap_angle(-0.5 - TAU), -0.5, epsilon = 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
    }
}
