//! Per-problem projected gradient descent on `phi`.

use std::time::Instant;

use super::{PhiEvaluation, PlanResult, Problem};
use crate::builder::LatentParams;
use crate::error::Result;
use crate::losses::{LossBreakdown, LossConfig};
use crate::scenario::Scenario;
use crate::spline::DEFAULT_SAMPLES;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescentConfig {
    pub max_iterations: usize,
    /// First trial step in the max-norm of `phi`.
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
    /// Window and relative tolerance of the total-curvature stopping test.
    pub patience: usize,
    pub rel_tol: f64,
    pub samples: usize,
    pub loss: LossConfig,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            initial_step: 0.1,
            max_step: 0.5,
            min_step: 1e-7,
            armijo: 1e-4,
            patience: 10,
            rel_tol: 1e-4,
            samples: DEFAULT_SAMPLES,
            loss: LossConfig::default(),
        }
    }
}

/// Curvature and collision part of the loss.
fn violation(b: &LossBreakdown, cfg: &LossConfig) -> f64 {
    cfg.curv_weight * b.curv + cfg.coll_weight * b.coll
}

/// Whether `new` is an acceptable step from `old` with predicted change `slope`.
///
/// Reaching zero violation is always accepted even though the gate then
/// switches the total-curvature term on. Once there, steps must keep the
/// violation at zero and decrease the gated term.
fn accept(old: &LossBreakdown, new: &LossBreakdown, slope: f64, c: f64, cfg: &LossConfig) -> bool {
    let (v_old, v_new) = (violation(old, cfg), violation(new, cfg));
    if v_old > 0.0 {
        v_new == 0.0 || v_new <= v_old + c * slope
    } else {
        v_new == 0.0 && new.gated_tcurv() <= old.gated_tcurv() + c * slope
    }
}

/// Plans one scenario by descending the loss over `phi`, starting from zero.
///
/// Returns the feasible iterate with the smallest gated total-curvature term,
/// or the last iterate when none was feasible.
pub fn plan_gradient_descent(scenario: &Scenario, depth: usize, cfg: &DescentConfig) -> Result<PlanResult> {
    descend(scenario, depth, cfg, &mut |_| {})
}

/// [`plan_gradient_descent`] reporting the loss of every accepted iterate, the start included.
pub fn descend(
    scenario: &Scenario,
    depth: usize,
    cfg: &DescentConfig,
    on_step: &mut dyn FnMut(&LossBreakdown),
) -> Result<PlanResult> {
    let started = Instant::now();
    let problem = Problem::new(scenario, depth, cfg.samples, cfg.loss)?;
    let mut phi = LatentParams::zeros(depth);
    let mut current = problem.evaluate(&phi, true)?;
    let mut best: Option<(f64, LatentParams, PhiEvaluation, usize)> = None;
    let mut history: Vec<f64> = Vec::new();
    let mut step = cfg.initial_step;
    let mut iterations = 0;
    on_step(&current.eval.breakdown);

    loop {
        let b = current.eval.breakdown;
        if current.eval.verdict.feasible {
            let gated = b.gated_tcurv();
            if best.as_ref().is_none_or(|(g, ..)| gated < *g) {
                best = Some((gated, phi.clone(), current.clone(), iterations));
            }
            history.push(gated);
            if gated <= 1e-12 {
                break;
            }
            if history.len() > cfg.patience {
                let earlier = history[history.len() - 1 - cfg.patience];
                if (earlier - gated).abs() <= cfg.rel_tol * earlier.abs() {
                    break;
                }
            }
        } else {
            history.clear();
        }
        if iterations >= cfg.max_iterations {
            break;
        }

        let grad = current.grad_phi.as_ref().expect("gradient requested");
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if scale == 0.0 || !scale.is_finite() {
            break;
        }
        let mut accepted = None;
        while step >= cfg.min_step {
            let trial: Vec<f64> = phi
                .values()
                .iter()
                .zip(grad)
                .map(|(p, g)| (p - step * g / scale).clamp(-1.0, 1.0))
                .collect();
            let slope: f64 = trial
                .iter()
                .zip(phi.values())
                .zip(grad)
                .map(|((t, p), g)| g * (t - p))
                .sum();
            if slope >= 0.0 {
                // every coordinate is pinned at the box
                break;
            }
            let trial = LatentParams::new(depth, trial)?;
            let eval = problem.evaluate(&trial, true)?;
            if accept(&b, &eval.eval.breakdown, slope, cfg.armijo, &cfg.loss) {
                accepted = Some((trial, eval));
                step = (2.0 * step).min(cfg.max_step);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((p, e)) => {
                on_step(&e.eval.breakdown);
                phi = p;
                current = e;
                iterations += 1;
            }
            None => break,
        }
    }

    let wall_time = started.elapsed();
    Ok(match best {
        Some((_, phi, eval, at)) => problem.result(phi, eval, at, wall_time),
        None => problem.result(phi, current, iterations, wall_time),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::Configuration;
    use crate::world::{OccupancyGrid, VehicleParams};
    use crate::Point;
    use std::sync::Arc;

    fn scenario(grid: OccupancyGrid, start: Configuration, goal: Configuration) -> Scenario {
        Scenario::new("t", Arc::new(grid), start, goal, VehicleParams::default()).unwrap()
    }

    #[test]
    fn aligned_corridor_is_solved_at_iteration_zero() {
        let mut grid = OccupancyGrid::local_map();
        grid.fill_rect(Point::new(0.0, 0.0), Point::new(25.6, 9.8));
        grid.fill_rect(Point::new(0.0, 15.8), Point::new(25.6, 25.6));
        let s = scenario(grid, Configuration::new(3.0, 12.8, 0.0, 0.0), Configuration::new(21.0, 12.8, 0.0, 0.0));
        let r = plan_gradient_descent(&s, 3, &DescentConfig::default()).unwrap();
        assert!(r.verdict.feasible);
        assert_eq!(r.iterations, 0);
        assert!(r.phi.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lateral_offset_in_empty_map() {
        let s = scenario(
            OccupancyGrid::local_map(),
            Configuration::new(2.0, 12.8, 0.0, 0.0),
            // the body ahead of x = 23 would leave the 25.6 m map
            Configuration::new(21.0, 18.0, 0.0, 0.0),
        );
        let mut losses = Vec::new();
        let r = descend(&s, 3, &DescentConfig::default(), &mut |b| losses.push(*b)).unwrap();
        assert!(r.verdict.feasible, "{:?} {:?}", r.verdict, r.loss);
        assert!(r.samples.max_abs_curvature() <= 0.227 + 1e-9);
        // violation never grows; once it is zero the gated term never grows
        for w in losses.windows(2) {
            let (a, b) = (w[0].curv + w[0].coll, w[1].curv + w[1].coll);
            assert!(b <= a);
            if a == 0.0 {
                assert!(w[1].total <= w[0].total);
            }
        }
    }

    #[test]
    fn walled_off_goal_stays_infeasible() {
        let mut grid = OccupancyGrid::local_map();
        grid.fill_rect(Point::new(16.0, 8.0), Point::new(25.6, 8.6));
        grid.fill_rect(Point::new(16.0, 17.0), Point::new(25.6, 17.6));
        grid.fill_rect(Point::new(16.0, 8.0), Point::new(16.6, 17.6));
        let s = scenario(grid, Configuration::new(3.0, 12.8, 0.0, 0.0), Configuration::new(21.0, 12.8, 0.0, 0.0));
        assert!(s.reference().is_none());
        let cfg = DescentConfig {
            max_iterations: 60,
            ..DescentConfig::default()
        };
        let r = plan_gradient_descent(&s, 3, &cfg).unwrap();
        assert!(!r.verdict.feasible && !r.verdict.collision_free);
    }

    #[test]
    fn result_is_consistent_with_its_phi() {
        let mut grid = OccupancyGrid::local_map();
        grid.fill_disc(Point::new(12.0, 13.5), 1.5);
        let s = scenario(grid, Configuration::new(3.0, 12.8, 0.0, 0.0), Configuration::new(22.0, 12.8, 0.0, 0.0));
        let r = plan_gradient_descent(&s, 3, &DescentConfig::default()).unwrap();
        let again = Problem::new(&s, 3, 1024, LossConfig::default())
            .unwrap()
            .evaluate(&r.phi, false)
            .unwrap();
        assert_eq!(again.polygon, r.polygon);
        assert_eq!(again.eval.breakdown, r.loss);
        assert_eq!(again.eval.verdict, r.verdict);
    }
}
