//! Scenario suites, batch evaluation with an independent re-check, the depth
//! ablation and SVG rendering.

mod evaluate;
mod generate;
mod render;
mod suite_io;

pub use evaluate::{
    ablate_depth, ablation_csv, evaluate, recheck, std_dev, AblationConfig, AblationRow, EvalOptions, MetricsReport,
    PlannerChoice, ScenarioRow,
};
pub use generate::{generate_suite, GeneratorKnobs, ScenarioSuite, SuiteKind, MIN_YIELD};
pub use render::{render, render_svg};
pub use suite_io::{load_suite, save_suite, SUITE_FILE};
