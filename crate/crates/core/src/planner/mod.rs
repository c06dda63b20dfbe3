//! Producers of the latent vector `phi`.
//!
//! [`plan_gradient_descent`] optimizes `phi` directly for one problem.
//! [`NetworkModel`] maps a problem to `phi` in one forward pass and is trained
//! with [`train`] by descending the same loss over a set of scenarios.

mod descent;
mod network;
mod train;

use std::sync::Arc;
use std::time::Duration;

pub use descent::{descend, plan_gradient_descent, DescentConfig};
pub use network::{
    config_features, load_checkpoint, plan_neural, save_checkpoint, NetworkModel, NetworkShape, ForwardTrace,
    CHECKPOINT_VERSION, DEFAULT_OUTPUT_GAIN, NUM_CONFIG_FEATURES,
};
pub use train::{train, EpochMetrics, TrainConfig, TrainReport};

use crate::builder::{LatentParams, PathBuilder};
use crate::error::Result;
use crate::losses::{LossBreakdown, LossConfig, LossContext, LossEvaluation, FeasibilityVerdict};
use crate::scenario::Scenario;
use crate::spline::{ControlPolygon, PathSamples, SplineBasis};

/// Output of either planner for one scenario.
#[derive(Clone, Debug)]
pub struct PlanResult {
    pub phi: LatentParams,
    pub polygon: ControlPolygon,
    pub samples: PathSamples,
    pub verdict: FeasibilityVerdict,
    pub loss: LossBreakdown,
    pub iterations: usize,
    pub wall_time: Duration,
}

/// Loss of one latent vector for one scenario.
#[derive(Clone, Debug)]
pub struct PhiEvaluation {
    pub polygon: ControlPolygon,
    pub eval: LossEvaluation,
    /// Gradient of the total loss with respect to `phi`, when requested.
    pub grad_phi: Option<Vec<f64>>,
}

/// A scenario paired with the path construction and sampling it is planned with.
pub struct Problem<'a> {
    pub scenario: &'a Scenario,
    pub builder: PathBuilder,
    pub basis: Arc<SplineBasis>,
    pub config: LossConfig,
}

impl<'a> Problem<'a> {
    pub fn new(scenario: &'a Scenario, depth: usize, samples: usize, config: LossConfig) -> Result<Self> {
        let builder = PathBuilder::new(depth)?;
        let basis = SplineBasis::shared(builder.num_points(), samples)?;
        Ok(Self {
            scenario,
            builder,
            basis,
            config,
        })
    }

    pub fn depth(&self) -> usize {
        self.builder.depth()
    }

    pub fn polygon(&self, phi: &LatentParams) -> Result<ControlPolygon> {
        self.builder.build(&self.scenario.start, &self.scenario.goal, phi)
    }

    pub fn evaluate(&self, phi: &LatentParams, with_gradient: bool) -> Result<PhiEvaluation> {
        let s = self.scenario;
        let polygon = self.polygon(phi)?;
        let ctx = LossContext {
            basis: &self.basis,
            grid: &s.grid,
            vehicle: &s.vehicle,
            guide: s.guide(),
            mask: Some(s.collision_mask()),
            config: self.config,
        };
        let eval = ctx.evaluate(&polygon, with_gradient)?;
        let grad_phi = match &eval.grad_points {
            Some(g) => Some(self.builder.pullback(&s.start, &s.goal, phi, g)?),
            None => None,
        };
        Ok(PhiEvaluation {
            polygon,
            eval,
            grad_phi,
        })
    }

    /// Builds, samples and scores `phi` as a finished plan with no iterations.
    pub fn result_for(&self, phi: LatentParams) -> Result<PlanResult> {
        let t = std::time::Instant::now();
        let e = self.evaluate(&phi, false)?;
        Ok(self.result(phi, e, 0, t.elapsed()))
    }

    fn result(&self, phi: LatentParams, e: PhiEvaluation, iterations: usize, wall_time: Duration) -> PlanResult {
        PlanResult {
            phi,
            polygon: e.polygon,
            samples: e.eval.samples,
            verdict: e.eval.verdict,
            loss: e.eval.breakdown,
            iterations,
            wall_time,
        }
    }
}
