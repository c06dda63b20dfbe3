//! Planning problems and their file format.
//!
//! A scenario file is TOML. The grid lives in a separate file referenced by a
//! path relative to the scenario file:
//!
//! ```toml
//! id = "corridor-0000"
//! grid = "grids/corridor-0000.txt"
//! resolution = 0.2
//! origin = [0.0, 0.0]
//! start = { x = 3.0, y = 12.8, theta = 0.0, kappa = 0.0 }
//! goal = { x = 21.0, y = 13.1, theta = 0.05, kappa = 0.0 }
//!
//! [vehicle]
//! kappa_max = 0.2
//! ```

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::builder::Configuration;
use crate::error::{Error, Result};
use crate::spline::Point;
use crate::world::{
    load_grid, reference_path, ClearanceGuide, CollisionMask, DistanceField, GridFormat, OccupancyGrid, ReferencePath,
    VehicleParams,
};

/// Occupancy grid, start and goal configurations, and the reference path.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub id: String,
    pub grid: Arc<OccupancyGrid>,
    pub start: Configuration,
    pub goal: Configuration,
    pub vehicle: VehicleParams,
    reference: Option<ReferencePath>,
    fallback: OnceLock<Arc<DistanceField>>,
    mask: OnceLock<Arc<CollisionMask>>,
}

impl Scenario {
    /// Builds a scenario and searches its reference path. A missing path is not
    /// an error: the collision loss then falls back to the distance field.
    pub fn new(
        id: impl Into<String>,
        grid: Arc<OccupancyGrid>,
        start: Configuration,
        goal: Configuration,
        vehicle: VehicleParams,
    ) -> Result<Self> {
        vehicle.validate()?;
        let reference = match reference_path(&grid, &start, &goal, &vehicle) {
            Ok(path) => Some(path),
            Err(Error::NoReferencePath) => None,
            Err(e) => return Err(e),
        };
        Ok(Self::with_reference(id, grid, start, goal, vehicle, reference))
    }

    pub fn with_reference(
        id: impl Into<String>,
        grid: Arc<OccupancyGrid>,
        start: Configuration,
        goal: Configuration,
        vehicle: VehicleParams,
        reference: Option<ReferencePath>,
    ) -> Self {
        Self {
            id: id.into(),
            grid,
            start,
            goal,
            vehicle,
            reference,
            fallback: OnceLock::new(),
            mask: OnceLock::new(),
        }
    }

    pub fn reference(&self) -> Option<&ReferencePath> {
        self.reference.as_ref()
    }

    /// The reference path, or the grid's distance field when there is none.
    pub fn guide(&self) -> &dyn ClearanceGuide {
        match &self.reference {
            Some(path) => path,
            None => self
                .fallback
                .get_or_init(|| Arc::new(DistanceField::new(&self.grid)))
                .as_ref(),
        }
    }

    /// Collision shortcut for this grid and vehicle, built on first use.
    pub fn collision_mask(&self) -> &CollisionMask {
        self.mask
            .get_or_init(|| Arc::new(CollisionMask::new(&self.grid, &self.vehicle)))
    }

    /// The same problem with every coordinate shifted by `by`.
    pub fn translated(&self, by: Point) -> Self {
        Self::with_reference(
            self.id.clone(),
            Arc::new(self.grid.translated(by)),
            self.start.translated(by),
            self.goal.translated(by),
            self.vehicle,
            self.reference.as_ref().map(|r| r.translated(by)),
        )
    }

    /// Same problem with different vehicle constants; the reference path is recomputed.
    pub fn with_vehicle(&self, vehicle: VehicleParams) -> Result<Self> {
        Self::new(self.id.clone(), self.grid.clone(), self.start, self.goal, vehicle)
    }
}

/// On-disk form of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub id: String,
    /// Grid file, relative to the file holding this record.
    pub grid: PathBuf,
    pub resolution: f64,
    #[serde(default)]
    pub origin: [f64; 2],
    pub start: Configuration,
    pub goal: Configuration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<VehicleParams>,
}

impl ScenarioRecord {
    /// Loads the grid relative to `base` and builds the scenario.
    pub fn resolve(&self, base: &Path, default_vehicle: &VehicleParams) -> Result<Scenario> {
        let path = base.join(&self.grid);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let grid = load_grid(&bytes, GridFormat::from_path(&path), self.resolution)?
            .with_origin(Point::new(self.origin[0], self.origin[1]));
        Scenario::new(
            self.id.clone(),
            Arc::new(grid),
            self.start,
            self.goal,
            self.vehicle.unwrap_or(*default_vehicle),
        )
    }

    /// Record for `scenario` whose grid will be written to `grid`.
    pub fn describe(scenario: &Scenario, grid: PathBuf, default_vehicle: &VehicleParams) -> Self {
        let origin = scenario.grid.origin();
        Self {
            id: scenario.id.clone(),
            grid,
            resolution: scenario.grid.resolution(),
            origin: [origin.x, origin.y],
            start: scenario.start,
            goal: scenario.goal,
            vehicle: (scenario.vehicle != *default_vehicle).then_some(scenario.vehicle),
        }
    }
}

pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

/// Reads one scenario file.
pub fn load_scenario(path: &Path, default_vehicle: &VehicleParams) -> Result<Scenario> {
    let record: ScenarioRecord = parse_toml(path)?;
    record.resolve(base_dir(path), default_vehicle)
}

/// Writes `scenario` to `path` and its grid next to it as `<stem>.grid.txt`.
pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    let grid_name = PathBuf::from(format!("{stem}.grid.txt"));
    write_file(
        &base_dir(path).join(&grid_name),
        &scenario.grid.encode(GridFormat::Text),
    )?;
    let record = ScenarioRecord::describe(scenario, grid_name, &VehicleParams::default());
    let text = toml::to_string(&record).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walled() -> Scenario {
        let mut grid = OccupancyGrid::local_map();
        grid.fill_rect(Point::new(12.0, 0.0), Point::new(12.6, 25.6));
        Scenario::new(
            "walled",
            Arc::new(grid),
            Configuration::new(3.0, 12.8, 0.0, 0.0),
            Configuration::new(22.0, 12.8, 0.0, 0.0),
            VehicleParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn guide_falls_back_without_reference() {
        let s = walled();
        assert!(s.reference().is_none());
        let (d, _) = s.guide().distance(Point::new(12.3, 12.8));
        assert!(d > 0.2 && d < 0.5, "{d}");
        assert_eq!(s.guide().distance(Point::new(5.0, 5.0)).0, 0.0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = walled();
        s.start = Configuration::new(3.1 + 1e-15, 12.812_345_678_901_234, 0.1, 0.013);
        s.vehicle.kappa_max = 0.2;
        let path = dir.path().join("walled.toml");
        save_scenario(&s, &path).unwrap();
        let back = load_scenario(&path, &VehicleParams::default()).unwrap();
        assert_eq!(back.id, s.id);
        assert_eq!(back.start, s.start);
        assert_eq!(back.goal, s.goal);
        assert_eq!(back.vehicle, s.vehicle);
        assert_eq!(*back.grid, *s.grid);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_scenario(Path::new("/nonexistent/x.toml"), &VehicleParams::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
