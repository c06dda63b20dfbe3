use std::sync::Arc;

use bspline_planner::bench::{evaluate, generate_suite, render, EvalOptions, GeneratorKnobs, PlannerChoice, SuiteKind};
use bspline_planner::builder::Configuration;
use bspline_planner::planner::{
    load_checkpoint, plan_gradient_descent, plan_neural, save_checkpoint, DescentConfig, NetworkModel, NetworkShape,
    DEFAULT_OUTPUT_GAIN,
};
use bspline_planner::scenario::{load_scenario, save_scenario, Scenario};
use bspline_planner::world::{OccupancyGrid, VehicleParams};
use bspline_planner::{Error, Point};

fn slalom() -> Scenario {
    let mut grid = OccupancyGrid::local_map();
    grid.fill_disc(Point::new(9.0, 11.0), 1.2);
    grid.fill_disc(Point::new(15.0, 15.0), 1.2);
    Scenario::new(
        "slalom",
        Arc::new(grid),
        Configuration::new(3.0, 13.0, 0.0, 0.0),
        Configuration::new(21.0, 13.0, 0.0, 0.0),
        VehicleParams::default(),
    )
    .unwrap()
}

#[test]
fn scenario_file_round_trip_keeps_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("slalom.toml");
    let s = slalom();
    save_scenario(&s, &path).unwrap();
    assert!(dir.path().join("slalom.grid.txt").exists());
    let back = load_scenario(&path, &VehicleParams::default()).unwrap();
    assert_eq!(*back.grid, *s.grid);
    assert_eq!((back.start, back.goal), (s.start, s.goal));

    let cfg = DescentConfig {
        max_iterations: 150,
        ..DescentConfig::default()
    };
    let a = plan_gradient_descent(&s, 3, &cfg).unwrap();
    let b = plan_gradient_descent(&back, 3, &cfg).unwrap();
    assert_eq!(a.phi, b.phi);
    assert!(a.verdict.feasible, "{:?}", a.loss);
}

#[test]
fn custom_vehicle_survives_the_file_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("van.toml");
    let van = VehicleParams {
        length: 5.2,
        width: 2.0,
        rear_axle_offset: 1.0,
        kappa_max: 0.18,
    };
    save_scenario(&slalom().with_vehicle(van).unwrap(), &path).unwrap();
    assert_eq!(load_scenario(&path, &VehicleParams::default()).unwrap().vehicle, van);
}

#[test]
fn checkpoint_reload_plans_identically() {
    let dir = tempfile::tempdir().unwrap();
    let v = VehicleParams::default();
    let model = NetworkModel::random(NetworkShape::standard(3), v, 4, DEFAULT_OUTPUT_GAIN).unwrap();
    let path = dir.path().join("nested/model.json");
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let s = slalom();
    let (a, b) = (
        plan_neural(&model, &s, 1024, Default::default()).unwrap(),
        plan_neural(&back, &s, 1024, Default::default()).unwrap(),
    );
    assert_eq!(a.phi, b.phi);
    assert_eq!(a.verdict, b.verdict);
}

#[test]
fn malformed_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "id = 3").unwrap();
    assert!(matches!(load_scenario(&bad, &VehicleParams::default()), Err(Error::Parse(_))));
    std::fs::write(&bad, "{\"version\": 99}").unwrap();
    assert!(matches!(load_checkpoint(&bad), Err(Error::Parse(_))));
    assert!(matches!(
        load_scenario(&dir.path().join("none.toml"), &VehicleParams::default()),
        Err(Error::Io { .. })
    ));
}

#[test]
fn parking_suite_evaluates_and_renders() {
    let dir = tempfile::tempdir().unwrap();
    let v = VehicleParams::default();
    let suite = generate_suite(SuiteKind::Parking, 3, 8, &GeneratorKnobs::default(), &v).unwrap();
    let planner = PlannerChoice::Descent {
        depth: 3,
        config: DescentConfig {
            max_iterations: 40,
            ..DescentConfig::default()
        },
    };
    let (report, results) = evaluate(&suite.scenarios, &planner, &EvalOptions { timing_runs: 1, parallel: true }).unwrap();
    assert_eq!(report.total, 3);
    assert_eq!(results.len(), 3);
    for (s, r) in suite.scenarios.iter().zip(&results) {
        let path = dir.path().join(format!("{}.svg", s.id));
        render(r, s, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.contains(&s.id));
    }
    if report.feasible > 0 {
        assert!(report.mean_max_kappa <= v.kappa_max);
    }
}
