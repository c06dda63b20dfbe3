use std::path::Path;
use std::process::{Command, Output};

fn bsplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bsplan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn generate(dir: &Path, kind: &str, count: &str, seed: &str) -> String {
    let p = dir.join(kind);
    ok(&["generate", "--kind", kind, "--count", count, "--seed", seed, "-o", p.to_str().unwrap()]);
    p.to_str().unwrap().to_owned()
}

#[test]
fn generate_plan_and_render_a_corridor() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path(), "corridor", "2", "5");
    let result = dir.path().join("r.json");
    let out = ok(&[
        "plan", "--scenario", &suite, "--id", "corridor-0000", "--max-iterations", "30", "-o",
        result.to_str().unwrap(),
    ]);
    assert!(out.contains("feasible=true"), "{out}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(json["phi"].as_array().unwrap().len(), 14);

    let svg = dir.path().join("out/r.svg");
    ok(&[
        "render", "--scenario", &suite, "--id", "corridor-0000", "--result", result.to_str().unwrap(), "-o",
        svg.to_str().unwrap(),
    ]);
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn generation_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = generate(a.path(), "mixed", "4", "9");
    let sb = generate(b.path(), "mixed", "4", "9");
    let read = |s: &str| std::fs::read(Path::new(s).join("suite.toml")).unwrap();
    assert_eq!(read(&sa), read(&sb));
}

#[test]
fn evaluate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path(), "empty", "3", "1");
    let report = dir.path().join("report.csv");
    let out = ok(&[
        "evaluate", "--suite", &suite, "--max-iterations", "20", "--timing-runs", "1", "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.contains("accuracy"));
    let csv = std::fs::read_to_string(report).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert!(lines[0].starts_with("id,feasible"));
    assert!(lines[1].starts_with("ALL,100"));
    assert_eq!(lines.len(), 5);
}

#[test]
fn train_then_plan_with_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path(), "easy", "4", "2");
    let ckpt = dir.path().join("model.json");
    let curve = dir.path().join("curve.csv");
    ok(&[
        "train", "--suite", &suite, "--validation", &suite, "--epochs", "1", "--depth", "2", "--checkpoint",
        ckpt.to_str().unwrap(), "--curve", curve.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(curve).unwrap().lines().count(), 3);
    let out = ok(&[
        "plan", "--scenario", &suite, "--id", "empty-0000", "--planner", "neural", "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.contains("empty-0000"));
}

#[test]
fn ablation_lists_every_depth() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path(), "mixed", "2", "4");
    let table = dir.path().join("ablation.csv");
    ok(&[
        "ablate-depth", "--train", &suite, "--suite", &suite, "--depths", "1,2", "--epochs", "1", "--timing-runs",
        "1", "-o", table.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(table).unwrap();
    let depths: Vec<_> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_owned()).collect();
    assert_eq!(depths, ["1", "2"]);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(bsplan(&["plan", "--bogus"]).status.code(), Some(1));
    assert_eq!(bsplan(&["fly"]).status.code(), Some(1));
    assert_eq!(bsplan(&["generate", "--kind", "maze", "-o", "x"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(dir.path(), "empty", "1", "1");
    let out = bsplan(&["plan", "--scenario", &suite, "--planner", "neural", "--id", "empty-0000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(bsplan(&["--help"]).status.success());
}

#[test]
fn io_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(bsplan(&["plan", "--scenario", missing.to_str().unwrap()]).status.code(), Some(3));
    let suite = generate(dir.path(), "empty", "1", "1");
    let out = bsplan(&[
        "render", "--scenario", &suite, "--id", "empty-0000", "--max-iterations", "2", "-o", "/proc/none/x.svg",
    ]);
    assert_eq!(out.status.code(), Some(3));
}
