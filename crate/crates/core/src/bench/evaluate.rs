//! Batch evaluation, metrics and the depth ablation.

use std::fmt::Write as _;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::losses::{verdict_from, FeasibilityVerdict, LossConfig, CUSP_CURVATURE_FACTOR};
use crate::planner::{
    plan_gradient_descent, plan_neural, train, DescentConfig, NetworkModel, DEFAULT_OUTPUT_GAIN, NetworkShape, PlanResult, TrainConfig,
};
use crate::scenario::Scenario;
use crate::spline::{make_knots, path_degree, sample_path};
use crate::world::{collision_indicator, footprint_at};

/// Planner run by [`evaluate`].
#[derive(Clone, Debug)]
pub enum PlannerChoice<'a> {
    Descent { depth: usize, config: DescentConfig },
    Neural { model: &'a NetworkModel, samples: usize, loss: LossConfig },
}

impl PlannerChoice<'_> {
    pub fn plan(&self, scenario: &Scenario) -> Result<PlanResult> {
        match self {
            PlannerChoice::Descent { depth, config } => plan_gradient_descent(scenario, *depth, config),
            PlannerChoice::Neural { model, samples, loss } => plan_neural(model, scenario, *samples, *loss),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            PlannerChoice::Descent { depth, .. } => *depth,
            PlannerChoice::Neural { model, .. } => model.depth(),
        }
    }

    fn samples(&self) -> usize {
        match self {
            PlannerChoice::Descent { config, .. } => config.samples,
            PlannerChoice::Neural { samples, .. } => *samples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// Each scenario is planned this many times; the median wall time is reported.
    pub timing_runs: usize,
    /// Plan scenarios on the rayon pool. Sequential runs give steadier timings.
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            timing_runs: 3,
            parallel: true,
        }
    }
}

/// One scenario's outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioRow {
    pub id: String,
    pub feasible: bool,
    pub collision_free: bool,
    pub curvature_ok: bool,
    pub monotone: bool,
    pub max_kappa: f64,
    pub length_m: f64,
    pub time_ms: f64,
    pub iterations: usize,
    pub loss: f64,
}

/// Aggregate metrics over a suite.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Percentage of feasible plans.
    pub accuracy: f64,
    pub feasible: usize,
    pub total: usize,
    pub mean_time_ms: f64,
    pub std_time_ms: f64,
    /// Mean of the per-path maximal curvature over feasible plans.
    pub mean_max_kappa: f64,
    pub rows: Vec<ScenarioRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs.iter().copied());
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl MetricsReport {
    /// Aggregates rows; a pure function of the rows.
    pub fn from_rows(rows: Vec<ScenarioRow>) -> Self {
        let total = rows.len();
        let feasible = rows.iter().filter(|r| r.feasible).count();
        let times: Vec<f64> = rows.iter().map(|r| r.time_ms).collect();
        Self {
            accuracy: if total == 0 { 0.0 } else { 100.0 * feasible as f64 / total as f64 },
            feasible,
            total,
            mean_time_ms: mean(times.iter().copied()),
            std_time_ms: std_dev(&times),
            mean_max_kappa: mean(rows.iter().filter(|r| r.feasible).map(|r| r.max_kappa)),
            rows,
        }
    }

    /// Comma-separated report: a header, an `ALL` aggregate row, then one row per scenario.
    ///
    /// In the aggregate row the flag columns hold percentages and the numeric
    /// columns hold means (the curvature mean is over feasible plans).
    pub fn to_csv(&self) -> Result<String> {
        let pct = |f: fn(&ScenarioRow) -> bool| {
            if self.total == 0 {
                0.0
            } else {
                100.0 * self.rows.iter().filter(|r| f(r)).count() as f64 / self.total as f64
            }
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record([
            "id",
            "feasible",
            "collision_free",
            "curvature_ok",
            "monotone",
            "max_kappa",
            "length_m",
            "time_ms",
            "iterations",
            "loss",
        ])
        .map_err(csv_err)?;
        w.write_record([
            "ALL".to_string(),
            self.accuracy.to_string(),
            pct(|r| r.collision_free).to_string(),
            pct(|r| r.curvature_ok).to_string(),
            pct(|r| r.monotone).to_string(),
            self.mean_max_kappa.to_string(),
            mean(self.rows.iter().map(|r| r.length_m)).to_string(),
            self.mean_time_ms.to_string(),
            mean(self.rows.iter().map(|r| r.iterations as f64)).to_string(),
            mean(self.rows.iter().map(|r| r.loss)).to_string(),
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.id.clone(),
                r.feasible.to_string(),
                r.collision_free.to_string(),
                r.curvature_ok.to_string(),
                r.monotone.to_string(),
                r.max_kappa.to_string(),
                r.length_m.to_string(),
                r.time_ms.to_string(),
                r.iterations.to_string(),
                r.loss.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<26} {:>10}", "metric", "value");
        let _ = writeln!(s, "{:<26} {:>9.1}%", "accuracy", self.accuracy);
        let _ = writeln!(s, "{:<26} {:>6}/{:<3}", "feasible / total", self.feasible, self.total);
        let _ = writeln!(s, "{:<26} {:>10.3}", "mean planning time [ms]", self.mean_time_ms);
        let _ = writeln!(s, "{:<26} {:>10.3}", "std planning time [ms]", self.std_time_ms);
        let _ = writeln!(s, "{:<26} {:>10.4}", "mean max curvature [1/m]", self.mean_max_kappa);
        s
    }
}

/// Feasibility of a plan recomputed from its control polygon with a freshly
/// built basis and the world's collision test, ignoring the planner's verdict.
pub fn recheck(scenario: &Scenario, result: &PlanResult, samples: usize) -> Result<FeasibilityVerdict> {
    let n = result.polygon.len();
    let knots = make_knots(path_degree(n), n)?;
    let kappa_max = scenario.vehicle.kappa_max;
    let path = sample_path(&result.polygon, &knots, samples, CUSP_CURVATURE_FACTOR * kappa_max)?;
    let ends = [
        (path.positions[0], scenario.start.position()),
        (*path.positions.last().expect("samples"), scenario.goal.position()),
    ];
    if ends.iter().any(|(a, b)| (a - b).norm() > 1e-6) {
        return Err(Error::Verification(format!("{}: path does not connect start and goal", scenario.id)));
    }
    let colliding: Vec<bool> = path
        .positions
        .iter()
        .zip(path.headings())
        .map(|(p, h)| collision_indicator(&footprint_at(*p, h, &scenario.vehicle), &scenario.grid))
        .collect();
    Ok(verdict_from(&path, &colliding, kappa_max))
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

fn run_one(scenario: &Scenario, planner: &PlannerChoice, opts: &EvalOptions) -> Result<(ScenarioRow, PlanResult)> {
    let result = planner.plan(scenario)?;
    let mut times = vec![result.wall_time];
    for _ in 1..opts.timing_runs.max(1) {
        times.push(planner.plan(scenario)?.wall_time);
    }
    let checked = recheck(scenario, &result, planner.samples())?;
    if checked != result.verdict {
        return Err(Error::Verification(format!(
            "{}: planner reported {:?}, re-check found {:?}",
            scenario.id, result.verdict, checked
        )));
    }
    let row = ScenarioRow {
        id: scenario.id.clone(),
        feasible: result.verdict.feasible,
        collision_free: result.verdict.collision_free,
        curvature_ok: result.verdict.curvature_ok,
        monotone: result.verdict.monotone,
        max_kappa: result.samples.max_abs_curvature(),
        length_m: result.samples.length(),
        time_ms: median(times).as_secs_f64() * 1e3,
        iterations: result.iterations,
        loss: result.loss.total,
    };
    Ok((row, result))
}

/// Plans every scenario, re-checks each verdict independently and aggregates.
///
/// A disagreement between planner and re-check is a [`Error::Verification`].
pub fn evaluate(
    scenarios: &[Scenario],
    planner: &PlannerChoice,
    opts: &EvalOptions,
) -> Result<(MetricsReport, Vec<PlanResult>)> {
    if scenarios.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty suite".into()));
    }
    let outcomes: Vec<(ScenarioRow, PlanResult)> = if opts.parallel {
        scenarios.par_iter().map(|s| run_one(s, planner, opts)).collect::<Result<_>>()?
    } else {
        scenarios.iter().map(|s| run_one(s, planner, opts)).collect::<Result<_>>()?
    };
    let (rows, results): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok((MetricsReport::from_rows(rows), results))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub depths: Vec<usize>,
    pub train: TrainConfig,
    pub model_seed: u64,
    pub output_gain: f64,
    pub eval: EvalOptions,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            depths: vec![1, 2, 3, 4],
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            model_seed: 0,
            output_gain: DEFAULT_OUTPUT_GAIN,
            eval: EvalOptions {
                timing_runs: 3,
                parallel: false,
            },
        }
    }
}

/// One line of the depth ablation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub depth: usize,
    pub control_points: usize,
    pub params: usize,
    pub accuracy: f64,
    pub mean_time_ms: f64,
    pub std_time_ms: f64,
    pub mean_max_kappa: f64,
}

/// Trains one network per depth on `train_set` and evaluates the neural
/// planner on `eval_set`.
pub fn ablate_depth(train_set: &[Scenario], eval_set: &[Scenario], cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    let vehicle = train_set
        .first()
        .map(|s| s.vehicle)
        .ok_or_else(|| Error::Contract("training set is empty".into()))?;
    cfg.depths
        .iter()
        .map(|&depth| {
            let model = NetworkModel::random(NetworkShape::standard(depth), vehicle, cfg.model_seed, cfg.output_gain)?;
            let model = train(model, train_set, &[], &cfg.train)?.model;
            let planner = PlannerChoice::Neural {
                model: &model,
                samples: cfg.train.samples,
                loss: cfg.train.loss,
            };
            let (report, _) = evaluate(eval_set, &planner, &cfg.eval)?;
            Ok(AblationRow {
                depth,
                control_points: crate::builder::num_control_points(depth),
                params: model.params().len(),
                accuracy: report.accuracy,
                mean_time_ms: report.mean_time_ms,
                std_time_ms: report.std_time_ms,
                mean_max_kappa: report.mean_max_kappa,
            })
        })
        .collect()
}

/// Comma-separated ablation table with a header row.
pub fn ablation_csv(rows: &[AblationRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}
