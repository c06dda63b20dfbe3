//! Synthetic scenario suites on 25.6 m x 25.6 m local maps.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::builder::Configuration;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::world::{collision_indicator, footprint_at, OccupancyGrid, VehicleParams};
use crate::Point;

/// Scenario families. `Easy` alternates empty maps and corridors, `Mixed`
/// alternates turns and obstacle fields; `File` marks suites read from disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    Empty,
    Corridor,
    Turn,
    Parking,
    ObstacleField,
    Easy,
    Mixed,
    File,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 8] = [
        SuiteKind::Empty,
        SuiteKind::Corridor,
        SuiteKind::Turn,
        SuiteKind::Parking,
        SuiteKind::ObstacleField,
        SuiteKind::Easy,
        SuiteKind::Mixed,
        SuiteKind::File,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Empty => "empty",
            SuiteKind::Corridor => "corridor",
            SuiteKind::Turn => "turn",
            SuiteKind::Parking => "parking",
            SuiteKind::ObstacleField => "obstacle-field",
            SuiteKind::Easy => "easy",
            SuiteKind::Mixed => "mixed",
            SuiteKind::File => "file",
        }
    }

    /// The single-family kind used for scenario `index`.
    fn family(self, index: usize) -> SuiteKind {
        match self {
            SuiteKind::Easy if index.is_multiple_of(2) => SuiteKind::Empty,
            SuiteKind::Easy => SuiteKind::Corridor,
            SuiteKind::Mixed if index.is_multiple_of(2) => SuiteKind::Turn,
            SuiteKind::Mixed => SuiteKind::ObstacleField,
            k => k,
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite kind `{s}`")))
    }
}

/// Difficulty knobs of the generators, in meters and radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorKnobs {
    pub corridor_width: f64,
    /// Largest lateral offset of start and goal from the corridor or lane center.
    pub lateral_jitter: f64,
    /// Largest deviation of start and goal headings from the road direction.
    pub heading_jitter: f64,
    pub turn_inner_radius: f64,
    pub turn_width: f64,
    pub bay_width: f64,
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    pub min_obstacle_size: f64,
    pub max_obstacle_size: f64,
}

impl Default for GeneratorKnobs {
    fn default() -> Self {
        Self {
            corridor_width: 6.0,
            lateral_jitter: 1.0,
            heading_jitter: 0.1,
            turn_inner_radius: 4.0,
            turn_width: 7.0,
            bay_width: 3.0,
            min_obstacles: 4,
            max_obstacles: 9,
            min_obstacle_size: 0.6,
            max_obstacle_size: 1.6,
        }
    }
}

/// Named, seeded collection of scenarios.
#[derive(Clone, Debug)]
pub struct ScenarioSuite {
    pub name: String,
    pub kind: SuiteKind,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

const MAP: f64 = 25.6;

struct Draft {
    grid: OccupancyGrid,
    start: Configuration,
    goal: Configuration,
}

fn jitter(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

/// Reflects a draft across the horizontal center line of the map.
fn mirror(d: Draft) -> Draft {
    let mut grid = OccupancyGrid::local_map();
    let h = d.grid.height();
    for cy in 0..h {
        for cx in 0..d.grid.width() {
            grid.set(cx, h - 1 - cy, d.grid.is_occupied(cx, cy));
        }
    }
    let flip = |q: Configuration| Configuration::new(q.x, MAP - q.y, -q.theta, -q.kappa);
    Draft {
        grid,
        start: flip(d.start),
        goal: flip(d.goal),
    }
}

fn open_start_goal(rng: &mut ChaCha8Rng, knobs: &GeneratorKnobs) -> (Configuration, Configuration) {
    let start = Configuration::new(
        rng.random_range(2.0..=4.0),
        rng.random_range(6.0..=19.6),
        jitter(rng, knobs.heading_jitter),
        0.0,
    );
    let gy = (start.y + rng.random_range(-5.0..=5.0)).clamp(4.0, MAP - 4.0);
    let goal = Configuration::new(rng.random_range(16.0..=21.0), gy, jitter(rng, 3.0 * knobs.heading_jitter), 0.0);
    (start, goal)
}

fn draft_empty(rng: &mut ChaCha8Rng, knobs: &GeneratorKnobs) -> Draft {
    let (start, goal) = open_start_goal(rng, knobs);
    Draft {
        grid: OccupancyGrid::local_map(),
        start,
        goal,
    }
}

fn draft_corridor(rng: &mut ChaCha8Rng, knobs: &GeneratorKnobs) -> Draft {
    let half = knobs.corridor_width / 2.0;
    let yc = rng.random_range(8.0..=MAP - 8.0);
    let mut grid = OccupancyGrid::local_map();
    grid.fill_where(|p| (p.y - yc).abs() > half);
    let start = Configuration::new(
        rng.random_range(2.0..=4.0),
        yc + jitter(rng, knobs.lateral_jitter),
        jitter(rng, knobs.heading_jitter),
        0.0,
    );
    let goal = Configuration::new(
        rng.random_range(16.0..=21.0),
        yc + jitter(rng, knobs.lateral_jitter),
        jitter(rng, knobs.heading_jitter),
        0.0,
    );
    Draft { grid, start, goal }
}

/// A road running east, bending left by a quarter circle and running north.
fn draft_turn(rng: &mut ChaCha8Rng, knobs: &GeneratorKnobs) -> Draft {
    let r_in = knobs.turn_inner_radius;
    let r_out = r_in + knobs.turn_width;
    let mid = (r_in + r_out) / 2.0;
    let center = Point::new(rng.random_range(7.0..=9.0), r_out + rng.random_range(0.4..=1.5));
    let road = |p: Point| {
        let rel = p - center;
        if rel.x <= 0.0 {
            rel.y <= -r_in && rel.y >= -r_out
        } else if rel.y <= 0.0 {
            let r = rel.norm();
            r >= r_in && r <= r_out
        } else {
            rel.x >= r_in && rel.x <= r_out
        }
    };
    let mut grid = OccupancyGrid::local_map();
    grid.fill_where(|p| !road(p));
    let lateral = knobs.lateral_jitter.min(knobs.turn_width / 2.0 - 1.2).max(0.0);
    let start = Configuration::new(
        rng.random_range(2.0..=4.0),
        center.y - mid + jitter(rng, lateral),
        jitter(rng, knobs.heading_jitter),
        0.0,
    );
    let goal = Configuration::new(
        center.x + mid + jitter(rng, lateral),
        rng.random_range((center.y + 2.0).min(MAP - 4.5)..=MAP - 4.5),
        FRAC_PI_2 + jitter(rng, knobs.heading_jitter),
        0.0,
    );
    let d = Draft { grid, start, goal };
    if rng.random_bool(0.5) {
        mirror(d)
    } else {
        d
    }
}

/// An aisle running east with a row of perpendicular bays on its left; the
/// goal is the one empty bay.
fn draft_parking(rng: &mut ChaCha8Rng, knobs: &GeneratorKnobs) -> Draft {
    let aisle = rng.random_range(7.0..=10.0);
    let (aisle_lo, aisle_hi) = (aisle - 3.5, aisle + 3.5);
    let bay_depth = 5.5;
    let bay = knobs.bay_width;
    let first = 6.0;
    let count = ((MAP - 1.0 - first) / bay).floor() as usize;
    let goal_slot = loop {
        let k = rng.random_range(0..count);
        let cx = first + (k as f64 + 0.5) * bay;
        if (12.0..=21.0).contains(&cx) {
            break k;
        }
    };
    let mut grid = OccupancyGrid::local_map();
    grid.fill_where(|p| p.y < aisle_lo || p.y > aisle_hi + bay_depth);
    for k in 0..count {
        if k == goal_slot {
            continue;
        }
        let cx = first + (k as f64 + 0.5) * bay;
        grid.fill_rect(
            Point::new(cx - 1.0, aisle_hi + 0.5),
            Point::new(cx + 1.0, aisle_hi + bay_depth - 0.4),
        );
    }
    let start = Configuration::new(
        rng.random_range(2.0..=4.0),
        aisle - 1.5 + jitter(rng, 0.5),
        jitter(rng, knobs.heading_jitter),
        0.0,
    );
    let goal = Configuration::new(
        first + (goal_slot as f64 + 0.5) * bay,
        aisle_hi + 0.6,
        FRAC_PI_2 + jitter(rng, 0.5 * knobs.heading_jitter),
        0.0,
    );
    let d = Draft { grid, start, goal };
    if rng.random_bool(0.5) {
        mirror(d)
    } else {
        d
    }
}

fn draft_obstacles(rng: &mut ChaCha8Rng, knobs: &GeneratorKnobs) -> Draft {
    let (start, goal) = open_start_goal(rng, knobs);
    let mut grid = OccupancyGrid::local_map();
    let n = rng.random_range(knobs.min_obstacles..=knobs.max_obstacles.max(knobs.min_obstacles));
    for _ in 0..n {
        let c = Point::new(rng.random_range(7.0..=19.0), rng.random_range(2.0..=MAP - 2.0));
        let size = rng.random_range(knobs.min_obstacle_size..=knobs.max_obstacle_size.max(knobs.min_obstacle_size));
        if rng.random_bool(0.5) {
            grid.fill_disc(c, size);
        } else {
            let aspect: f64 = rng.random_range(0.5..=2.0);
            let half = Point::new(size * aspect.sqrt(), size / aspect.sqrt());
            grid.fill_rect(c - half, c + half);
        }
    }
    Draft { grid, start, goal }
}

fn draft(kind: SuiteKind, rng: &mut ChaCha8Rng, knobs: &GeneratorKnobs) -> Draft {
    match kind {
        SuiteKind::Empty => draft_empty(rng, knobs),
        SuiteKind::Corridor => draft_corridor(rng, knobs),
        SuiteKind::Turn => draft_turn(rng, knobs),
        SuiteKind::Parking => draft_parking(rng, knobs),
        SuiteKind::ObstacleField => draft_obstacles(rng, knobs),
        SuiteKind::Easy | SuiteKind::Mixed | SuiteKind::File => unreachable!("composite kinds are resolved per index"),
    }
}

/// Accepts a draft whose start and goal bodies are free and whose reference path exists.
fn admit(id: String, d: Draft, vehicle: &VehicleParams) -> Result<Option<Scenario>> {
    for q in [&d.start, &d.goal] {
        if collision_indicator(&footprint_at(q.position(), q.theta, vehicle), &d.grid) {
            return Ok(None);
        }
    }
    let s = Scenario::new(id, Arc::new(d.grid), d.start, d.goal, *vehicle)?;
    Ok(s.reference().is_some().then_some(s))
}

/// Minimum fraction of drafts that must be admitted.
pub const MIN_YIELD: f64 = 0.1;

/// Generates `count` scenarios of `kind`, resampling rejected drafts.
///
/// Fails when fewer than [`MIN_YIELD`] of the drafts are admitted.
pub fn generate_suite(
    kind: SuiteKind,
    count: usize,
    seed: u64,
    knobs: &GeneratorKnobs,
    vehicle: &VehicleParams,
) -> Result<ScenarioSuite> {
    if count == 0 {
        return Err(Error::Generation("suite size must be at least 1".into()));
    }
    if kind == SuiteKind::File {
        return Err(Error::Generation("file suites are loaded, not generated".into()));
    }
    vehicle.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenarios = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while scenarios.len() < count {
        let family = kind.family(scenarios.len());
        attempts += 1;
        let d = draft(family, &mut rng, knobs);
        let id = format!("{}-{:04}", family.name(), scenarios.len());
        if let Some(s) = admit(id, d, vehicle)? {
            scenarios.push(s);
        }
        if attempts >= 50 && (scenarios.len() as f64) < MIN_YIELD * attempts as f64 {
            return Err(Error::Generation(format!(
                "{kind} generator admitted {} of {attempts} drafts (below {:.0}%); relax the knobs {knobs:?}",
                scenarios.len(),
                100.0 * MIN_YIELD
            )));
        }
    }
    Ok(ScenarioSuite {
        name: format!("{kind}-{seed}"),
        kind,
        seed,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn suite(kind: SuiteKind, n: usize, seed: u64) -> ScenarioSuite {
        generate_suite(kind, n, seed, &GeneratorKnobs::default(), &VehicleParams::default()).unwrap()
    }

    #[test]
    fn kinds_parse_and_print() {
        for k in SuiteKind::ALL {
            assert_eq!(k.name().parse::<SuiteKind>().unwrap(), k);
        }
        assert!("spiral".parse::<SuiteKind>().is_err());
    }

    #[test]
    fn same_seed_same_suite() {
        for kind in [SuiteKind::Easy, SuiteKind::Mixed, SuiteKind::Parking] {
            let (a, b) = (suite(kind, 6, 5), suite(kind, 6, 5));
            for (x, y) in a.scenarios.iter().zip(&b.scenarios) {
                assert_eq!(x.id, y.id);
                assert_eq!(x.start, y.start);
                assert_eq!(x.goal, y.goal);
                assert_eq!(*x.grid, *y.grid);
            }
        }
    }

    #[test]
    fn endpoints_are_free_and_referenced() {
        for kind in [SuiteKind::Empty, SuiteKind::Corridor, SuiteKind::Turn, SuiteKind::Parking, SuiteKind::ObstacleField] {
            for s in &suite(kind, 5, 1).scenarios {
                let v = &s.vehicle;
                for q in [&s.start, &s.goal] {
                    assert!(!collision_indicator(&footprint_at(q.position(), q.theta, v), &s.grid), "{}", s.id);
                }
                assert!(s.reference().is_some());
            }
        }
    }

    #[test]
    fn corridor_is_straight_and_aligned() {
        for s in &suite(SuiteKind::Corridor, 10, 3).scenarios {
            assert!((s.start.y - s.goal.y).abs() <= 2.0);
            assert!(s.start.theta.abs() <= 0.1 && s.goal.theta.abs() <= 0.1);
            let r = s.reference().unwrap();
            // the reference polyline is nearly the chord
            let chord = (s.goal.position() - s.start.position()).norm();
            assert!(r.length() < chord + 0.5, "{} vs {chord}", r.length());
        }
    }

    #[test]
    fn composite_kinds_alternate() {
        let s = suite(SuiteKind::Mixed, 4, 2);
        let ids: Vec<&str> = s.scenarios.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["turn-0000", "obstacle-field-0001", "turn-0002", "obstacle-field-0003"]);
    }

    #[test]
    fn impossible_knobs_report_low_yield() {
        let knobs = GeneratorKnobs {
            corridor_width: 1.0,
            ..GeneratorKnobs::default()
        };
        let err = generate_suite(SuiteKind::Corridor, 5, 0, &knobs, &VehicleParams::default()).unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
    }
}
