//! Experiment harness: runs configured simulations, writes `results.csv`
//! with a `meta.json` sidecar, and condenses them into `summary.json`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod summary;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

pub use config::{Experiment, ExperimentConfig, ScalarConfig};
pub use error::{CliError, CliResult};
pub use experiments::{run_experiment, RunOutput};
pub use output::{ResultRow, RunMeta, META_FILE, RESULTS_FILE, SUMMARY_FILE};
pub use summary::{summarize, Summary};

/// Runs `cfg` and writes the result table and metadata into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> CliResult<RunOutput> {
    let out = run_experiment(cfg)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(RESULTS_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    output::write_rows(&out.rows, BufWriter::new(file))?;
    output::write_json(&out.meta, &dir.join(META_FILE))?;
    Ok(out)
}

/// Reads a run directory and writes `summary.json` next to its inputs.
pub fn summarize_dir(dir: &Path) -> CliResult<Summary> {
    let rows = output::read_rows(&dir.join(RESULTS_FILE))?;
    let meta_path = dir.join(META_FILE);
    let meta: Option<RunMeta> = if meta_path.exists() { Some(output::read_json(&meta_path)?) } else { None };
    let summary = summarize(&rows, meta.as_ref())?;
    output::write_json(&summary, &dir.join(SUMMARY_FILE))?;
    Ok(summary)
}
