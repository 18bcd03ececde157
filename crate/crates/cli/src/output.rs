use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const RESULTS_FILE: &str = "results.csv";
pub const META_FILE: &str = "meta.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// One checkpoint of one seed. The first fourteen columns form the fixed
/// schema; `system`, `mc_stat` and `mc_bound` follow them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ResultRow {
    pub experiment: String,
    pub z: Option<f64>,
    pub regime: String,
    pub kappa: f64,
    pub seed: u64,
    pub T: f64,
    pub err_spectral: Option<f64>,
    pub scaled_err: Option<f64>,
    pub lambda_min_V: Option<f64>,
    pub lambda_max_V: Option<f64>,
    pub y_radius: Option<f64>,
    pub covmin_bound: Option<f64>,
    pub covmax_bound: Option<f64>,
    pub truncated: bool,
    pub system: String,
    /// Monte-Carlo statistic; the seed violates its bound when it exceeds `mc_bound`.
    pub mc_stat: Option<f64>,
    pub mc_bound: Option<f64>,
}

impl ResultRow {
    pub fn blank(experiment: &str, system: &str, z: Option<f64>, regime: &str, kappa: f64, seed: u64, t: f64) -> Self {
        ResultRow {
            experiment: experiment.to_string(),
            z,
            regime: regime.to_string(),
            kappa,
            seed,
            T: t,
            err_spectral: None,
            scaled_err: None,
            lambda_min_V: None,
            lambda_max_V: None,
            y_radius: None,
            covmin_bound: None,
            covmax_bound: None,
            truncated: false,
            system: system.to_string(),
            mc_stat: None,
            mc_bound: None,
        }
    }

    pub fn violates(&self) -> bool {
        matches!((self.mc_stat, self.mc_bound), (Some(s), Some(b)) if s > b)
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
    }
}

/// Order by system, `z`, `kappa`, seed and horizon.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.system
            .cmp(&b.system)
            .then_with(|| cmp_opt(a.z, b.z))
            .then_with(|| a.kappa.total_cmp(&b.kappa))
            .then_with(|| a.seed.cmp(&b.seed))
            .then_with(|| a.T.total_cmp(&b.T))
    });
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::Csv(e.into()))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> CliResult<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let rows = r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

/// Static description of one simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMeta {
    pub system: String,
    pub z: Option<f64>,
    pub kappa: f64,
    pub regime: String,
    pub lambda1: f64,
    pub l_star: usize,
    pub jordan_warning: bool,
    pub c: f64,
    pub beta: f64,
    pub p_star: f64,
    pub cond_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub system: String,
    pub z: Option<f64>,
    pub seed: u64,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub config: ExperimentConfig,
    pub systems: Vec<SystemMeta>,
    pub initial_states: Vec<InitialState>,
}

impl RunMeta {
    pub fn system(&self, system: &str, z: Option<f64>, kappa: f64) -> Option<&SystemMeta> {
        self.systems
            .iter()
            .find(|s| s.system == system && s.z == z && s.kappa == kappa)
    }
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
