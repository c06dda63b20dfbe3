use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ScenarioSuite, SuiteKind};
use crate::error::{Error, Result};
use crate::scenario::{parse_toml, write_file, ScenarioRecord};
use crate::world::{GridFormat, VehicleParams};

/// File name of the suite index inside a suite directory.
pub const SUITE_FILE: &str = "suite.toml";

#[derive(Serialize, Deserialize)]
struct SuiteFile {
    name: String,
    kind: SuiteKind,
    seed: u64,
    scenarios: Vec<ScenarioRecord>,
}

/// Writes `dir/suite.toml` and one text grid per scenario under `dir/grids/`.
pub fn save_suite(suite: &ScenarioSuite, dir: &Path) -> Result<PathBuf> {
    let default_vehicle = VehicleParams::default();
    let mut records = Vec::with_capacity(suite.scenarios.len());
    for s in &suite.scenarios {
        let rel = PathBuf::from("grids").join(format!("{}.txt", s.id));
        write_file(&dir.join(&rel), &s.grid.encode(GridFormat::Text))?;
        records.push(ScenarioRecord::describe(s, rel, &default_vehicle));
    }
    let file = SuiteFile {
        name: suite.name.clone(),
        kind: suite.kind,
        seed: suite.seed,
        scenarios: records,
    };
    let text = toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))?;
    let index = dir.join(SUITE_FILE);
    write_file(&index, text.as_bytes())?;
    Ok(index)
}

/// Reads a suite from its directory or its `suite.toml`.
///
/// Scenarios without vehicle overrides use `default_vehicle`.
pub fn load_suite(path: &Path, default_vehicle: &VehicleParams) -> Result<ScenarioSuite> {
    let index = if path.is_dir() { path.join(SUITE_FILE) } else { path.to_path_buf() };
    let file: SuiteFile = parse_toml(&index)?;
    let base = index.parent().unwrap_or(Path::new("."));
    let scenarios = file
        .scenarios
        .iter()
        .map(|r| r.resolve(base, default_vehicle))
        .collect::<Result<Vec<_>>>()?;
    if scenarios.is_empty() {
        return Err(Error::Parse(format!("{} lists no scenarios", index.display())));
    }
    Ok(ScenarioSuite {
        name: file.name,
        kind: file.kind,
        seed: file.seed,
        scenarios,
    })
}
