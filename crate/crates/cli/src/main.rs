//! `bsplan`: generate scenario suites, plan, train, evaluate, ablate and render.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bspline_planner::bench::{
    ablate_depth, ablation_csv, evaluate, generate_suite, load_suite, render, save_suite, AblationConfig, EvalOptions,
    GeneratorKnobs, PlannerChoice, SuiteKind,
};
use bspline_planner::builder::LatentParams;
use bspline_planner::losses::LossConfig;
use bspline_planner::planner::{
    load_checkpoint, plan_gradient_descent, plan_neural, save_checkpoint, train, DescentConfig, NetworkModel,
    NetworkShape, PlanResult, Problem, TrainConfig, DEFAULT_OUTPUT_GAIN,
};
use bspline_planner::scenario::{load_scenario, Scenario};
use bspline_planner::world::VehicleParams;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bsplan", version, about = "Curvature-constrained B-spline maneuver planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a scenario suite into a directory.
    Generate(GenerateArgs),
    /// Plan one scenario and print its verdict.
    Plan(PlanArgs),
    /// Train a network on a suite and write a checkpoint.
    Train(TrainArgs),
    /// Plan every scenario of a suite and report metrics.
    Evaluate(EvaluateArgs),
    /// Train and evaluate one network per tree depth.
    AblateDepth(AblateArgs),
    /// Plan one scenario and draw it as SVG.
    Render(RenderArgs),
}

#[derive(Args, Debug, Clone, Copy)]
struct VehicleArgs {
    /// Body length in meters.
    #[arg(long, default_value_t = VehicleParams::default().length)]
    length: f64,
    /// Body width in meters.
    #[arg(long, default_value_t = VehicleParams::default().width)]
    width: f64,
    /// Distance from the rear bumper to the rear axle in meters.
    #[arg(long, default_value_t = VehicleParams::default().rear_axle_offset)]
    rear_axle_offset: f64,
    /// Largest admissible curvature in 1/m.
    #[arg(long, default_value_t = VehicleParams::default().kappa_max)]
    kappa_max: f64,
}

impl VehicleArgs {
    fn params(&self) -> Result<VehicleParams, CliError> {
        let v = VehicleParams {
            length: self.length,
            width: self.width,
            rear_axle_offset: self.rear_axle_offset,
            kappa_max: self.kappa_max,
        };
        v.validate()?;
        Ok(v)
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct LossArgs {
    /// Weight of the total-curvature term.
    #[arg(long, default_value_t = LossConfig::default().gamma)]
    gamma: f64,
}

impl LossArgs {
    fn config(&self) -> LossConfig {
        LossConfig {
            gamma: self.gamma,
            ..LossConfig::default()
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PlannerKind {
    Descent,
    Neural,
}

#[derive(Args, Debug, Clone)]
struct PlannerArgs {
    #[arg(long, value_enum, default_value_t = PlannerKind::Descent)]
    planner: PlannerKind,
    /// Network checkpoint, required by the neural planner.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Tree depth for gradient descent. The neural planner uses the checkpoint's depth.
    #[arg(long, short = 'd', default_value_t = 3)]
    depth: usize,
    /// Samples along the path.
    #[arg(long, short = 's', default_value_t = 1024)]
    samples: usize,
    /// Iteration cap of gradient descent.
    #[arg(long, default_value_t = DescentConfig::default().max_iterations)]
    max_iterations: usize,
    #[command(flatten)]
    loss: LossArgs,
}

/// A planner together with the model it may borrow.
struct LoadedPlanner {
    args: PlannerArgs,
    model: Option<NetworkModel>,
}

impl LoadedPlanner {
    fn load(args: &PlannerArgs) -> Result<Self, CliError> {
        let model = match args.planner {
            PlannerKind::Descent => None,
            PlannerKind::Neural => {
                let path = args
                    .checkpoint
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("--planner neural requires --checkpoint".into()))?;
                Some(load_checkpoint(path)?)
            }
        };
        Ok(Self {
            args: args.clone(),
            model,
        })
    }

    fn choice(&self) -> PlannerChoice<'_> {
        match &self.model {
            Some(model) => PlannerChoice::Neural {
                model,
                samples: self.args.samples,
                loss: self.args.loss.config(),
            },
            None => PlannerChoice::Descent {
                depth: self.args.depth,
                config: DescentConfig {
                    max_iterations: self.args.max_iterations,
                    samples: self.args.samples,
                    loss: self.args.loss.config(),
                    ..DescentConfig::default()
                },
            },
        }
    }

    fn plan(&self, scenario: &Scenario) -> Result<PlanResult, CliError> {
        Ok(match self.choice() {
            PlannerChoice::Descent { depth, config } => plan_gradient_descent(scenario, depth, &config)?,
            PlannerChoice::Neural { model, samples, loss } => plan_neural(model, scenario, samples, loss)?,
        })
    }
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario file, or a suite directory / suite.toml together with --id.
    #[arg(long)]
    scenario: PathBuf,
    /// Scenario id inside a suite.
    #[arg(long)]
    id: Option<String>,
}

impl ScenarioArgs {
    fn load(&self, vehicle: &VehicleParams) -> Result<Scenario, CliError> {
        match &self.id {
            None if self.scenario.is_dir() => Err(CliError::Usage(format!(
                "{} is a suite directory; pass --id",
                self.scenario.display()
            ))),
            None => Ok(load_scenario(&self.scenario, vehicle)?),
            Some(id) => {
                let suite = load_suite(&self.scenario, vehicle)?;
                suite
                    .scenarios
                    .into_iter()
                    .find(|s| &s.id == id)
                    .ok_or_else(|| CliError::Usage(format!("no scenario {id} in {}", self.scenario.display())))
            }
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: SuiteKind,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// TOML file overriding generator knobs.
    #[arg(long)]
    knobs: Option<PathBuf>,
    #[arg(long)]
    corridor_width: Option<f64>,
    #[arg(long)]
    turn_inner_radius: Option<f64>,
    #[arg(long)]
    max_obstacles: Option<usize>,
    #[command(flatten)]
    vehicle: VehicleArgs,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Write the result (phi, verdict, loss) as JSON.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    #[command(flatten)]
    vehicle: VehicleArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training suite.
    #[arg(long)]
    suite: PathBuf,
    /// Validation suite.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long, short = 'd', default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short = 's', default_value_t = 1024)]
    samples: usize,
    /// Scale of the initial output-head weights.
    #[arg(long, default_value_t = DEFAULT_OUTPUT_GAIN)]
    output_gain: f64,
    /// Checkpoint to write.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write per-epoch metrics as CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    vehicle: VehicleArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    suite: PathBuf,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Write the per-scenario report as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Plans per scenario; the median time is reported.
    #[arg(long, default_value_t = 3)]
    timing_runs: usize,
    /// Plan one scenario at a time.
    #[arg(long)]
    sequential: bool,
    /// Also render every scenario into this directory.
    #[arg(long)]
    render_dir: Option<PathBuf>,
    #[command(flatten)]
    vehicle: VehicleArgs,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Training suite.
    #[arg(long)]
    train: PathBuf,
    /// Evaluation suite.
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
    depths: Vec<usize>,
    #[arg(long, default_value_t = AblationConfig::default().train.epochs)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short = 's', default_value_t = 1024)]
    samples: usize,
    #[arg(long, default_value_t = 3)]
    timing_runs: usize,
    /// Write the table as CSV.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    vehicle: VehicleArgs,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Draw this result JSON (from `plan --out`) instead of planning.
    #[arg(long)]
    result: Option<PathBuf>,
    /// SVG file to write.
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[command(flatten)]
    vehicle: VehicleArgs,
}

fn parse_kind(s: &str) -> Result<SuiteKind, String> {
    s.parse().map_err(|e: bspline_planner::Error| e.to_string())
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Lib(bspline_planner::Error),
}

impl From<bspline_planner::Error> for CliError {
    fn from(e: bspline_planner::Error) -> Self {
        CliError::Lib(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(p, e) => write!(f, "i/o error on {}: {e}", p.display()),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use bspline_planner::Error as E;
        match self {
            CliError::Io(..) | CliError::Lib(E::Io { .. } | E::Parse(_)) => 3,
            CliError::Lib(E::Verification(_)) => 2,
            _ => 1,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn result_json(scenario: &Scenario, r: &PlanResult) -> serde_json::Value {
    serde_json::json!({
        "scenario": scenario.id,
        "depth": r.phi.depth(),
        "phi": r.phi.values(),
        "feasible": r.verdict.feasible,
        "collision_free": r.verdict.collision_free,
        "curvature_ok": r.verdict.curvature_ok,
        "monotone": r.verdict.monotone,
        "max_kappa": r.samples.max_abs_curvature(),
        "loss": {
            "curv": r.loss.curv,
            "coll": r.loss.coll,
            "tcurv": r.loss.tcurv,
            "total": r.loss.total,
        },
        "iterations": r.iterations,
        "time_ms": r.wall_time.as_secs_f64() * 1e3,
    })
}

fn cmd_generate(a: GenerateArgs) -> Result<(), CliError> {
    let vehicle = a.vehicle.params()?;
    let mut knobs = match &a.knobs {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| CliError::Lib(bspline_planner::Error::Parse(e.to_string())))?,
        None => GeneratorKnobs::default(),
    };
    if let Some(w) = a.corridor_width {
        knobs.corridor_width = w;
    }
    if let Some(r) = a.turn_inner_radius {
        knobs.turn_inner_radius = r;
    }
    if let Some(n) = a.max_obstacles {
        knobs.max_obstacles = n;
        knobs.min_obstacles = knobs.min_obstacles.min(n);
    }
    let suite = generate_suite(a.kind, a.count, a.seed, &knobs, &vehicle)?;
    let index = save_suite(&suite, &a.out)?;
    println!("wrote {} scenarios to {}", suite.scenarios.len(), index.display());
    Ok(())
}

fn cmd_plan(a: PlanArgs) -> Result<(), CliError> {
    let vehicle = a.vehicle.params()?;
    let scenario = a.scenario.load(&vehicle)?;
    let planner = LoadedPlanner::load(&a.planner)?;
    let r = planner.plan(&scenario)?;
    let v = &r.verdict;
    println!(
        "{}: feasible={} collision_free={} curvature_ok={} monotone={} max_kappa={:.4} iterations={} time={:.2}ms",
        scenario.id,
        v.feasible,
        v.collision_free,
        v.curvature_ok,
        v.monotone,
        r.samples.max_abs_curvature(),
        r.iterations,
        r.wall_time.as_secs_f64() * 1e3
    );
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&result_json(&scenario, &r)).expect("json values serialize");
        write(out, &text)?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let vehicle = a.vehicle.params()?;
    let train_set = load_suite(&a.suite, &vehicle)?;
    let validation = match &a.validation {
        Some(p) => load_suite(p, &vehicle)?.scenarios,
        None => Vec::new(),
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        seed: a.seed,
        samples: a.samples,
        loss: a.loss.config(),
    };
    let model = NetworkModel::random(NetworkShape::standard(a.depth), vehicle, a.seed, a.output_gain)?;
    let report = train(model, &train_set.scenarios, &validation, &cfg)?;
    println!("epoch  train_loss  train_acc  val_loss  val_acc");
    for e in &report.epochs {
        println!(
            "{:>5}  {:>10.4}  {:>9.3}  {:>8.4}  {:>7.3}",
            e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy
        );
    }
    save_checkpoint(&report.model, &a.checkpoint)?;
    if let Some(curve) = &a.curve {
        let mut text = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for e in &report.epochs {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy
            ));
        }
        write(curve, &text)?;
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let vehicle = a.vehicle.params()?;
    let suite = load_suite(&a.suite, &vehicle)?;
    let planner = LoadedPlanner::load(&a.planner)?;
    let opts = EvalOptions {
        timing_runs: a.timing_runs.max(1),
        parallel: !a.sequential,
    };
    let (report, results) = evaluate(&suite.scenarios, &planner.choice(), &opts)?;
    print!("{}", report.table());
    if let Some(path) = &a.report {
        write(path, &report.to_csv()?)?;
    }
    if let Some(dir) = &a.render_dir {
        for (s, r) in suite.scenarios.iter().zip(&results) {
            render(r, s, &dir.join(format!("{}.svg", s.id)))?;
        }
    }
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<(), CliError> {
    let vehicle = a.vehicle.params()?;
    let train_set = load_suite(&a.train, &vehicle)?;
    let eval_set = load_suite(&a.suite, &vehicle)?;
    let defaults = AblationConfig::default();
    let cfg = AblationConfig {
        depths: a.depths,
        train: TrainConfig {
            epochs: a.epochs,
            seed: a.seed,
            samples: a.samples,
            loss: a.loss.config(),
            ..defaults.train
        },
        model_seed: a.seed,
        eval: EvalOptions {
            timing_runs: a.timing_runs.max(1),
            ..defaults.eval
        },
        ..defaults
    };
    let rows = ablate_depth(&train_set.scenarios, &eval_set.scenarios, &cfg)?;
    println!("depth  points  params  accuracy  time_ms  std_ms  max_kappa");
    for r in &rows {
        println!(
            "{:>5}  {:>6}  {:>6}  {:>7.1}%  {:>7.3}  {:>6.3}  {:>9.4}",
            r.depth, r.control_points, r.params, r.accuracy, r.mean_time_ms, r.std_time_ms, r.mean_max_kappa
        );
    }
    if let Some(out) = &a.out {
        write(out, &ablation_csv(&rows)?)?;
    }
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<(), CliError> {
    let vehicle = a.vehicle.params()?;
    let scenario = a.scenario.load(&vehicle)?;
    let result = match &a.result {
        Some(path) => {
            let v: serde_json::Value = serde_json::from_str(&read(path)?)
                .map_err(|e| CliError::Lib(bspline_planner::Error::Parse(e.to_string())))?;
            let bad = || CliError::Lib(bspline_planner::Error::Parse(format!("{} is not a plan result", path.display())));
            let depth = v["depth"].as_u64().ok_or_else(bad)? as usize;
            let phi = v["phi"]
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|x| x.as_f64().ok_or_else(bad))
                .collect::<Result<Vec<_>, _>>()?;
            let problem = Problem::new(&scenario, depth, a.planner.samples, a.planner.loss.config())?;
            problem.result_for(LatentParams::new(depth, phi)?)?
        }
        None => LoadedPlanner::load(&a.planner)?.plan(&scenario)?,
    };
    render(&result, &scenario, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::AblateDepth(a) => cmd_ablate(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
