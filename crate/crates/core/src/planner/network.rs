//! A small convolutional network from a local map and two configurations to `phi`.
//!
//! The map is average-pooled, passed through stride-2 convolutions with ReLU,
//! flattened and concatenated with eight configuration features. Fully
//! connected ReLU layers follow, and a `tanh` head emits `phi`. Forward and
//! backward passes are written out by hand over one flat parameter vector.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PlanResult, Problem};
use crate::builder::{latent_len, Configuration, LatentParams};
use crate::error::{Error, Result};
use crate::losses::{sample_collisions, verdict_from, LossConfig, LossContext, CUSP_CURVATURE_FACTOR};
use crate::scenario::{write_file, Scenario};
use crate::world::{OccupancyGrid, VehicleParams};

/// Format version written into checkpoints.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Scale of the initial output-head weights. Small enough that an untrained
/// model stays close to the midpoint construction.
pub const DEFAULT_OUTPUT_GAIN: f64 = 0.01;

/// Position, heading and curvature of the start and the goal.
pub const NUM_CONFIG_FEATURES: usize = 8;

const KERNEL: usize = 3;

/// Layer sizes of a [`NetworkModel`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    /// Side of the square input grid in cells.
    pub grid: usize,
    /// Average-pooling window applied to the grid first.
    pub pool: usize,
    /// Output channels of each stride-2 convolution.
    pub conv_channels: Vec<usize>,
    /// Widths of the fully connected hidden layers.
    pub hidden: Vec<usize>,
    /// Tree depth, which fixes the output size.
    pub depth: usize,
}

impl NetworkShape {
    /// The default encoder for 128 x 128 maps: 32 x 32 after pooling, 8 x 8 x 8 after two convolutions.
    pub fn standard(depth: usize) -> Self {
        Self {
            grid: 128,
            pool: 4,
            conv_channels: vec![6, 8],
            hidden: vec![64, 64],
            depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.pool == 0 || self.grid == 0 || !self.grid.is_multiple_of(self.pool) {
            return Err(Error::Contract(format!("invalid network shape {self:?}")));
        }
        if self.conv_channels.contains(&0) || self.hidden.contains(&0) {
            return Err(Error::Contract("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn num_outputs(&self) -> usize {
        latent_len(self.depth)
    }

    fn layers(&self) -> Layout {
        let mut offset = 0;
        let mut side = self.grid / self.pool;
        let mut channels = 1;
        let mut convs = Vec::new();
        for &out in &self.conv_channels {
            let out_side = (side - 1) / 2 + 1;
            let weights = out * channels * KERNEL * KERNEL;
            convs.push(ConvLayer {
                in_ch: channels,
                out_ch: out,
                in_side: side,
                out_side,
                w: offset,
                b: offset + weights,
            });
            offset += weights + out;
            side = out_side;
            channels = out;
        }
        let mut dense = Vec::new();
        let mut width = side * side * channels + NUM_CONFIG_FEATURES;
        let outputs = self.num_outputs();
        for (k, &out) in self.hidden.iter().chain(std::iter::once(&outputs)).enumerate() {
            dense.push(DenseLayer {
                inputs: width,
                outputs: out,
                w: offset,
                b: offset + out * width,
                head: k == self.hidden.len(),
            });
            offset += out * width + out;
            width = out;
        }
        Layout {
            convs,
            dense,
            num_params: offset,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers().num_params
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvLayer {
    in_ch: usize,
    out_ch: usize,
    in_side: usize,
    out_side: usize,
    w: usize,
    b: usize,
}

impl ConvLayer {
    fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        self.w + ((o * self.in_ch + i) * KERNEL + ky) * KERNEL + kx
    }

    /// Input cell read by output `(oy, ox)` at kernel offset `(ky, kx)`, if inside.
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (2 * oy + ky).checked_sub(1)?;
        let x = (2 * ox + kx).checked_sub(1)?;
        (y < self.in_side && x < self.in_side).then_some((y, x))
    }
}

#[derive(Clone, Copy, Debug)]
struct DenseLayer {
    inputs: usize,
    outputs: usize,
    w: usize,
    b: usize,
    head: bool,
}

#[derive(Clone, Debug)]
struct Layout {
    convs: Vec<ConvLayer>,
    dense: Vec<DenseLayer>,
    num_params: usize,
}

/// Activations kept by [`NetworkModel::forward_trace`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input of each layer, then the final output.
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty trace")
    }
}

/// Network parameters with the vehicle they were trained for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    shape: NetworkShape,
    vehicle: VehicleParams,
    params: Vec<f64>,
}

/// Eight scalars describing the start and goal in map-relative units.
pub fn config_features(grid: &OccupancyGrid, start: &Configuration, goal: &Configuration, kappa_max: f64) -> [f64; 8] {
    let (w, h) = grid.extent();
    let o = grid.origin();
    let one = |q: &Configuration| {
        [
            (q.x - o.x) / w,
            (q.y - o.y) / h,
            q.theta / std::f64::consts::PI,
            q.kappa / kappa_max,
        ]
    };
    let (a, b) = (one(start), one(goal));
    [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]]
}

impl NetworkModel {
    /// Randomly initialized model. Hidden layers use He-uniform weights, the
    /// output head a Glorot-uniform draw scaled by `output_gain`; biases start at 0.
    pub fn random(shape: NetworkShape, vehicle: VehicleParams, seed: u64, output_gain: f64) -> Result<Self> {
        shape.validate()?;
        let layout = shape.layers();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.num_params];
        for c in &layout.convs {
            let bound = (6.0 / (c.in_ch * KERNEL * KERNEL) as f64).sqrt();
            for p in &mut params[c.w..c.b] {
                *p = rng.random_range(-bound..bound);
            }
        }
        for d in &layout.dense {
            let bound = if d.head {
                output_gain * (6.0 / (d.inputs + d.outputs) as f64).sqrt()
            } else {
                (6.0 / d.inputs as f64).sqrt()
            };
            for p in &mut params[d.w..d.b] {
                *p = if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
            }
        }
        Ok(Self { shape, vehicle, params })
    }

    pub fn from_params(shape: NetworkShape, vehicle: VehicleParams, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if params.len() != shape.num_params() {
            return Err(Error::Contract(format!(
                "shape needs {} parameters, got {}",
                shape.num_params(),
                params.len()
            )));
        }
        Ok(Self { shape, vehicle, params })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn depth(&self) -> usize {
        self.shape.depth
    }

    pub fn vehicle(&self) -> &VehicleParams {
        &self.vehicle
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Zeroes the output head so every input maps to `phi = 0`.
    pub fn zero_head(&mut self) {
        let head = *self.shape.layers().dense.last().expect("output layer");
        self.params[head.w..head.b + head.outputs].fill(0.0);
    }

    fn pooled_input(&self, grid: &OccupancyGrid) -> Result<Vec<f64>> {
        let n = self.shape.grid;
        if grid.width() != n || grid.height() != n {
            return Err(Error::Contract(format!(
                "model expects a {n} x {n} grid, got {} x {}",
                grid.width(),
                grid.height()
            )));
        }
        let k = self.shape.pool;
        let side = n / k;
        let mut out = vec![0.0; side * side];
        let cells = grid.cells();
        for cy in 0..n {
            for cx in 0..n {
                if cells[cy * n + cx] {
                    out[(cy / k) * side + cx / k] += 1.0;
                }
            }
        }
        let norm = 1.0 / (k * k) as f64;
        out.iter_mut().for_each(|v| *v *= norm);
        Ok(out)
    }

    /// Forward pass keeping every activation.
    pub fn forward_trace(&self, scenario: &Scenario) -> Result<ForwardTrace> {
        let layout = self.shape.layers();
        let p = &self.params;
        let mut activations = vec![self.pooled_input(&scenario.grid)?];
        for c in &layout.convs {
            let input = activations.last().unwrap();
            let (si, so) = (c.in_side, c.out_side);
            let mut out = vec![0.0; c.out_ch * so * so];
            for o in 0..c.out_ch {
                for oy in 0..so {
                    for ox in 0..so {
                        let mut acc = p[c.b + o];
                        for i in 0..c.in_ch {
                            for ky in 0..KERNEL {
                                for kx in 0..KERNEL {
                                    if let Some((y, x)) = c.source(oy, ox, ky, kx) {
                                        acc += p[c.weight(o, i, ky, kx)] * input[(i * si + y) * si + x];
                                    }
                                }
                            }
                        }
                        out[(o * so + oy) * so + ox] = acc.max(0.0);
                    }
                }
            }
            activations.push(out);
        }
        let mut fused = activations.last().unwrap().clone();
        fused.extend(config_features(
            &scenario.grid,
            &scenario.start,
            &scenario.goal,
            self.vehicle.kappa_max,
        ));
        activations.push(fused);
        for d in &layout.dense {
            let input = activations.last().unwrap();
            let out: Vec<f64> = (0..d.outputs)
                .map(|o| {
                    let row = &p[d.w + o * d.inputs..d.w + (o + 1) * d.inputs];
                    let z = p[d.b + o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                    if d.head {
                        z.tanh()
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            activations.push(out);
        }
        Ok(ForwardTrace { activations })
    }

    /// `phi` for `scenario`, every entry in `(-1, 1)`.
    pub fn forward(&self, scenario: &Scenario) -> Result<LatentParams> {
        let trace = self.forward_trace(scenario)?;
        LatentParams::new(self.depth(), trace.output().to_vec())
    }

    /// Gradient with respect to the parameters, given the gradient of a scalar
    /// with respect to the output of the traced forward pass.
    pub fn backward(&self, trace: &ForwardTrace, grad_output: &[f64]) -> Result<Vec<f64>> {
        let layout = self.shape.layers();
        if grad_output.len() != self.shape.num_outputs() {
            return Err(Error::Contract(format!(
                "output gradient has {} entries, model emits {}",
                grad_output.len(),
                self.shape.num_outputs()
            )));
        }
        let p = &self.params;
        let acts = &trace.activations;
        let mut grad = vec![0.0; self.params.len()];
        // activations: [pooled, conv.., fused, dense..]
        let first_dense = layout.convs.len() + 1;
        let mut upstream = grad_output.to_vec();
        for (k, d) in layout.dense.iter().enumerate().rev() {
            let input = &acts[first_dense + k];
            let output = &acts[first_dense + k + 1];
            let dz: Vec<f64> = upstream
                .iter()
                .zip(output)
                .map(|(g, y)| if d.head { g * (1.0 - y * y) } else if *y > 0.0 { *g } else { 0.0 })
                .collect();
            let mut down = vec![0.0; d.inputs];
            for (o, &dzo) in dz.iter().enumerate() {
                if dzo == 0.0 {
                    continue;
                }
                grad[d.b + o] += dzo;
                let w = d.w + o * d.inputs;
                for j in 0..d.inputs {
                    grad[w + j] += dzo * input[j];
                    down[j] += dzo * p[w + j];
                }
            }
            upstream = down;
        }
        // drop the configuration features
        upstream.truncate(upstream.len() - NUM_CONFIG_FEATURES);
        for (k, c) in layout.convs.iter().enumerate().rev() {
            let input = &acts[k];
            let output = &acts[k + 1];
            let (si, so) = (c.in_side, c.out_side);
            let mut down = vec![0.0; c.in_ch * si * si];
            for o in 0..c.out_ch {
                for oy in 0..so {
                    for ox in 0..so {
                        let idx = (o * so + oy) * so + ox;
                        if output[idx] <= 0.0 || upstream[idx] == 0.0 {
                            continue;
                        }
                        let dz = upstream[idx];
                        grad[c.b + o] += dz;
                        for i in 0..c.in_ch {
                            for ky in 0..KERNEL {
                                for kx in 0..KERNEL {
                                    if let Some((y, x)) = c.source(oy, ox, ky, kx) {
                                        let w = c.weight(o, i, ky, kx);
                                        let src = (i * si + y) * si + x;
                                        grad[w] += dz * input[src];
                                        down[src] += dz * p[w];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            upstream = down;
        }
        Ok(grad)
    }
}

/// One forward pass, path construction, sampling and verdict.
///
/// `wall_time` covers exactly those steps; the loss reported alongside is
/// computed afterwards.
pub fn plan_neural(model: &NetworkModel, scenario: &Scenario, samples: usize, loss: LossConfig) -> Result<PlanResult> {
    let problem = Problem::new(scenario, model.depth(), samples, loss)?;
    let vehicle = &scenario.vehicle;

    let started = Instant::now();
    let phi = model.forward(scenario)?;
    let polygon = problem.polygon(&phi)?;
    let sampled = problem.basis.sample(&polygon, CUSP_CURVATURE_FACTOR * vehicle.kappa_max)?;
    let colliding = sample_collisions(&sampled, &scenario.grid, vehicle);
    let verdict = verdict_from(&sampled, &colliding, vehicle.kappa_max);
    let wall_time = started.elapsed();

    let ctx = LossContext {
        basis: &problem.basis,
        grid: &scenario.grid,
        vehicle,
        guide: scenario.guide(),
        mask: None,
        config: loss,
    };
    let breakdown = ctx.evaluate(&polygon, false)?.breakdown;
    Ok(PlanResult {
        phi,
        polygon,
        samples: sampled,
        verdict,
        loss: breakdown,
        iterations: 0,
        wall_time,
    })
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    #[serde(flatten)]
    model: NetworkModel,
}

/// Writes `model` as JSON; floats round-trip exactly.
pub fn save_checkpoint(model: &NetworkModel, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(path, text.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    let m = ckpt.model;
    NetworkModel::from_params(m.shape, m.vehicle, m.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::Point;
    use std::sync::Arc;

    fn tiny_shape() -> NetworkShape {
        NetworkShape {
            grid: 128,
            pool: 16,
            conv_channels: vec![2],
            hidden: vec![3],
            depth: 1,
        }
    }

    fn cluttered() -> Scenario {
        let mut grid = OccupancyGrid::local_map();
        grid.fill_rect(Point::new(9.0, 4.0), Point::new(13.0, 9.0));
        grid.fill_disc(Point::new(16.0, 18.0), 2.5);
        Scenario::new(
            "clutter",
            Arc::new(grid),
            Configuration::new(3.0, 12.8, 0.1, 0.05),
            Configuration::new(22.0, 14.0, -0.2, 0.0),
            VehicleParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn standard_shape_is_small() {
        let shape = NetworkShape::standard(3);
        assert!(shape.num_params() < 1_000_000);
        let layout = shape.layers();
        assert_eq!(layout.convs.last().unwrap().out_side, 8);
        assert_eq!(layout.dense[0].inputs, 8 * 8 * 8 + NUM_CONFIG_FEATURES);
        assert_eq!(shape.num_outputs(), 14);
    }

    #[test]
    fn zero_head_gives_midpoint_path() {
        let mut model = NetworkModel::random(NetworkShape::standard(3), VehicleParams::default(), 1, 1.0).unwrap();
        model.zero_head();
        let phi = model.forward(&cluttered()).unwrap();
        assert!(phi.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn outputs_bounded_and_deterministic() {
        let s = cluttered();
        let a = NetworkModel::random(NetworkShape::standard(2), VehicleParams::default(), 9, 1.0).unwrap();
        let b = NetworkModel::random(NetworkShape::standard(2), VehicleParams::default(), 9, 1.0).unwrap();
        let (pa, pb) = (a.forward(&s).unwrap(), b.forward(&s).unwrap());
        assert_eq!(pa, pb);
        assert!(pa.values().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn grid_shape_mismatch_is_contract_error() {
        let model = NetworkModel::random(NetworkShape::standard(1), VehicleParams::default(), 0, 1.0).unwrap();
        let small = Scenario::new(
            "small",
            Arc::new(OccupancyGrid::new(64, 64, 0.2).unwrap()),
            Configuration::new(2.0, 6.0, 0.0, 0.0),
            Configuration::new(10.0, 6.0, 0.0, 0.0),
            VehicleParams::default(),
        )
        .unwrap();
        assert!(matches!(model.forward(&small), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let s = cluttered();
        let model = NetworkModel::random(tiny_shape(), VehicleParams::default(), 3, 1.0).unwrap();
        let trace = model.forward_trace(&s).unwrap();
        let g = model.backward(&trace, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = cluttered();
        let upstream = [0.7, -1.3];
        for seed in 0..4 {
            let mut model = NetworkModel::random(tiny_shape(), VehicleParams::default(), seed, 1.0).unwrap();
            // zero biases on empty cells sit exactly on the ReLU kink
            for (k, p) in model.params.iter_mut().enumerate() {
                *p += 0.05 * (k as f64 * 0.37 + seed as f64).sin();
            }
            let trace = model.forward_trace(&s).unwrap();
            let grad = model.backward(&trace, &upstream).unwrap();
            let objective = |m: &NetworkModel| -> f64 {
                let out = m.forward_trace(&s).unwrap();
                out.output().iter().zip(&upstream).map(|(o, u)| o * u).sum()
            };
            let h = 1e-5;
            for (k, &analytic) in grad.iter().enumerate() {
                let mut plus = model.clone();
                plus.params[k] += h;
                let mut minus = model.clone();
                minus.params[k] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let err = (fd - analytic).abs();
                assert!(
                    err <= 1e-4 * fd.abs().max(analytic.abs()) || err < 1e-9,
                    "seed {seed} param {k}: fd {fd} analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn saturated_outputs_have_finite_gradients() {
        let s = cluttered();
        let mut model = NetworkModel::random(tiny_shape(), VehicleParams::default(), 5, 1.0).unwrap();
        let head = *model.shape.layers().dense.last().unwrap();
        model.params[head.b] = 40.0;
        model.params[head.b + 1] = -40.0;
        let trace = model.forward_trace(&s).unwrap();
        assert!(trace.output()[0] > 0.999_999);
        let g = model.backward(&trace, &[1.0, 1.0]).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn neural_plan_reaches_goal_and_times_itself() {
        let s = cluttered();
        let model = NetworkModel::random(NetworkShape::standard(3), VehicleParams::default(), 11, 1.0).unwrap();
        let r = plan_neural(&model, &s, 1024, LossConfig::default()).unwrap();
        let last = *r.samples.positions.last().unwrap();
        assert!((last - s.goal.position()).norm() < 1e-9);
        assert!((r.samples.positions[0] - s.start.position()).norm() < 1e-9);
        assert!(r.wall_time.as_nanos() > 0);
        if r.verdict.feasible {
            assert!(r.samples.max_abs_curvature() <= 0.227 + 1e-9);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut model = NetworkModel::random(NetworkShape::standard(2), VehicleParams::default(), 21, 1.0).unwrap();
        model.params[0] = 0.1 + 0.2;
        model.params[1] = f64::MIN_POSITIVE;
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.params.len(), model.params.len());
        assert!(back.params.iter().zip(&model.params).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back, model);
    }

    #[test]
    fn checkpoint_version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = NetworkModel::random(tiny_shape(), VehicleParams::default(), 0, 1.0).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace("\"version\":1", "\"version\":99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Parse(_))));
    }
}
