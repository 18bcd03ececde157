use std::fs;
use std::path::Path;
use std::process::Command;

use ctsysid_cli::output::read_rows;
use ctsysid_cli::summary::Summary;
use ctsysid_cli::RunMeta;

fn ctsysid(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ctsysid")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"fig1\"\ntrajectories = 3\nhorizon = 12\nstride = 2\n");
    let out = dir.path().join("out");
    let status = ctsysid(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed-base", "7"]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let rows = read_rows(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 3 * 3 * 6);
    assert!(rows.iter().all(|r| (7..10).contains(&r.seed)));
    for r in &rows {
        let err = r.err_spectral.unwrap();
        assert!((r.scaled_err.unwrap() - r.T.sqrt() * err).abs() <= 1e-12 * r.scaled_err.unwrap());
    }
    let meta: RunMeta = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta.config.seed_base, 7);
    assert_eq!(meta.initial_states.len(), 9);
    assert_eq!(meta.initial_states[0].x0.len(), 3);

    let status = ctsysid(&["summarize", "--in", out.to_str().unwrap()]);
    assert!(status.status.success());
    let summary: Summary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.groups.len(), 3);
    for g in &summary.groups {
        assert_eq!(g.seeds, 3);
        assert_eq!(g.horizons.len(), 6);
        assert!(g.slope.is_some());
        assert!(g.horizons.iter().all(|h| h.lambda_min_floor.unwrap() > 0.0));
    }
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"fig1\"\nz = [15]\ntrajectories = 2\nhorizon = 2\n");
    let out = dir.path().join("out");
    let status = ctsysid(&[
        "run", "--config", &cfg, "--out", out.to_str().unwrap(),
        "--experiment", "eig-growth", "--kappa-override", "3",
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let rows = read_rows(&out.join("results.csv")).unwrap();
    assert!(rows.iter().all(|r| r.experiment == "eig-growth" && r.kappa == 3.0));
}

#[test]
fn coverage_experiments_summarize_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"lil-mc\"\ntrajectories = 20\nhorizon = 5\n");
    let out = dir.path().join("out");
    assert!(ctsysid(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert!(ctsysid(&["summarize", "--in", out.to_str().unwrap()]).status.success());
    let summary: Summary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let c = summary.groups[0].coverage.clone().unwrap();
    assert_eq!(c.seeds, 20);
    assert!((0.0..=1.0).contains(&c.fraction));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "experiment = \"fig1\"\nz = [7]\n");
    let out = ctsysid(&["run", "--config", &bad, "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("z = 7"));

    let missing = ctsysid(&["summarize", "--in", dir.path().join("nothing").to_str().unwrap()]);
    assert!(!missing.status.success());

    let good = write_config(dir.path(), "experiment = \"fig1\"\n");
    let no_out = ctsysid(&["run", "--config", &good]);
    assert!(!no_out.status.success());
}
