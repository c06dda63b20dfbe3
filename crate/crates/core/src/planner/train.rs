//! Mini-batch training of [`NetworkModel`] on the feasibility loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{NetworkModel, Problem};
use crate::builder::LatentParams;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::scenario::Scenario;
use crate::spline::DEFAULT_SAMPLES;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub samples: usize,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 16,
            seed: 0,
            samples: DEFAULT_SAMPLES,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.samples < 2 || self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Contract(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

/// Metrics after one epoch; epoch 0 is the untrained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: NetworkModel,
    pub epochs: Vec<EpochMetrics>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mean loss and feasible fraction of `model` on `set`.
pub(crate) fn assess(model: &NetworkModel, set: &[Scenario], cfg: &TrainConfig) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((0.0, 0.0));
    }
    let rows: Vec<(f64, bool)> = set
        .par_iter()
        .map(|s| {
            let phi = model.forward(s)?;
            let e = Problem::new(s, model.depth(), cfg.samples, cfg.loss)?.evaluate(&phi, false)?;
            Ok((e.eval.breakdown.total, e.eval.verdict.feasible))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let loss = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let acc = rows.iter().filter(|r| r.1).count() as f64 / n;
    Ok((loss, acc))
}

fn sample_gradient(model: &NetworkModel, s: &Scenario, cfg: &TrainConfig) -> Result<(f64, Vec<f64>)> {
    let trace = model.forward_trace(s)?;
    let phi = LatentParams::new(model.depth(), trace.output().to_vec())?;
    let e = Problem::new(s, model.depth(), cfg.samples, cfg.loss)?.evaluate(&phi, true)?;
    let grad_phi = e.grad_phi.expect("gradient requested");
    Ok((e.eval.breakdown.total, model.backward(&trace, &grad_phi)?))
}

/// Trains `model` on `train_set` with Adam, reporting metrics on both sets
/// before training and after every epoch.
///
/// Batches are evaluated in parallel and reduced in a fixed order, so a given
/// seed reproduces the same parameters bit for bit.
pub fn train(mut model: NetworkModel, train_set: &[Scenario], validation: &[Scenario], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let metrics = |model: &NetworkModel, epoch: usize| -> Result<EpochMetrics> {
        let (train_loss, train_accuracy) = assess(model, train_set, cfg)?;
        let (val_loss, val_accuracy) = assess(model, validation, cfg)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("mean loss train {train_loss}, validation {val_loss}"),
            });
        }
        Ok(EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params().len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = vec![metrics(&model, 0)?];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let parts: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| sample_gradient(&model, &train_set[i], cfg))
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; model.params().len()];
            for (i, (loss, g)) in parts.iter().enumerate() {
                if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence {
                        epoch,
                        detail: format!("non-finite loss or gradient on scenario {}", train_set[batch[i]].id),
                    });
                }
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(model.params_mut(), &grad, cfg.learning_rate);
        }
        epochs.push(metrics(&model, epoch)?);
    }
    Ok(TrainReport { model, epochs })
}
