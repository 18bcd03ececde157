use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{ResultRow, RunMeta};

pub const SLOPE_WINDOW: (f64, f64) = (10.0, 50.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonStats {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub err: Option<Band>,
    pub scaled_err: Option<Band>,
    /// Median of `log(lambda_max(V_T)) / T`.
    pub log_lambda_max_rate: Option<f64>,
    /// Median of `lambda_max(V_T) / T`.
    pub lambda_max_per_time: Option<f64>,
    /// Minimum over seeds of `lambda_min(V_T) / (T c kappa^2)`.
    pub lambda_min_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub seeds: usize,
    pub violations: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub experiment: String,
    pub system: String,
    pub z: Option<f64>,
    pub kappa: f64,
    pub regime: String,
    pub seeds: usize,
    /// Median over seeds of the least-squares slope of `log err` on `log T`.
    pub slope: Option<f64>,
    pub coverage: Option<Coverage>,
    pub horizons: Vec<HorizonStats>,
}

impl GroupSummary {
    pub fn at(&self, horizon: f64) -> Option<&HorizonStats> {
        self.horizons.iter().find(|h| h.horizon == horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
}

impl Summary {
    pub fn group(&self, system: &str, z: Option<f64>) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.system == system && g.z == z)
    }
}

/// Linearly interpolated quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Ordinary least-squares slope; `None` with fewer than two distinct `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn band(values: &[f64]) -> Option<Band> {
    (!values.is_empty()).then(|| Band {
        median: median(values),
        q10: quantile(values, 0.1),
        q90: quantile(values, 0.9),
    })
}

type GroupKey = (String, String, Option<u64>, u64);

fn key(row: &ResultRow) -> GroupKey {
    (
        row.experiment.clone(),
        row.system.clone(),
        row.z.map(f64::to_bits),
        row.kappa.to_bits(),
    )
}

pub fn summarize(rows: &[ResultRow], meta: Option<&RunMeta>) -> CliResult<Summary> {
    if rows.is_empty() {
        return Err(CliError::EmptyTable);
    }
    let mut groups: BTreeMap<GroupKey, Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(key(row)).or_default().push(row);
    }
    let mut out: Vec<GroupSummary> = groups.into_values().map(|g| summarize_group(&g, meta)).collect();
    out.sort_by(|a, b| {
        a.system
            .cmp(&b.system)
            .then_with(|| a.z.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.z.unwrap_or(f64::NEG_INFINITY)))
            .then_with(|| a.kappa.total_cmp(&b.kappa))
    });
    Ok(Summary { groups: out })
}

fn summarize_group(rows: &[&ResultRow], meta: Option<&RunMeta>) -> GroupSummary {
    let first = rows[0];
    let c = meta
        .and_then(|m| m.system(&first.system, first.z, first.kappa))
        .map(|s| s.c);
    let mut by_seed: BTreeMap<u64, Vec<&ResultRow>> = BTreeMap::new();
    let mut by_t: BTreeMap<u64, Vec<&ResultRow>> = BTreeMap::new();
    for &row in rows {
        by_seed.entry(row.seed).or_default().push(row);
        by_t.entry(row.T.to_bits()).or_default().push(row);
    }

    let mut seed_slopes = Vec::new();
    for seed_rows in by_seed.values() {
        let pts: Vec<(f64, f64)> = seed_rows
            .iter()
            .filter(|r| r.T >= SLOPE_WINDOW.0 && r.T <= SLOPE_WINDOW.1)
            .filter_map(|r| r.err_spectral.filter(|e| *e > 0.0).map(|e| (r.T.ln(), e.ln())))
            .collect();
        if let Some(s) = ols_slope(&pts) {
            seed_slopes.push(s);
        }
    }

    let has_mc = rows.iter().any(|r| r.mc_stat.is_some());
    let coverage = has_mc.then(|| {
        let violations = by_seed.values().filter(|rs| rs.iter().any(|r| r.violates())).count();
        Coverage {
            seeds: by_seed.len(),
            violations,
            fraction: violations as f64 / by_seed.len() as f64,
        }
    });

    let mut horizons: Vec<HorizonStats> = by_t
        .values()
        .map(|rs| {
            let t = rs[0].T;
            let errs: Vec<f64> = rs.iter().filter_map(|r| r.err_spectral).collect();
            let scaled: Vec<f64> = rs.iter().filter_map(|r| r.scaled_err).collect();
            let maxes: Vec<f64> = rs.iter().filter_map(|r| r.lambda_max_V).collect();
            let mins: Vec<f64> = rs.iter().filter_map(|r| r.lambda_min_V).collect();
            let rates: Vec<f64> = maxes.iter().map(|m| m.ln() / t).collect();
            let per_time: Vec<f64> = maxes.iter().map(|m| m / t).collect();
            let floor = c.filter(|_| !mins.is_empty()).map(|c| {
                mins.iter()
                    .map(|m| m / (t * c * first.kappa * first.kappa))
                    .fold(f64::INFINITY, f64::min)
            });
            HorizonStats {
                horizon: t,
                err: band(&errs),
                scaled_err: band(&scaled),
                log_lambda_max_rate: (!rates.is_empty()).then(|| median(&rates)),
                lambda_max_per_time: (!per_time.is_empty()).then(|| median(&per_time)),
                lambda_min_floor: floor,
            }
        })
        .collect();
    horizons.sort_by(|a, b| a.horizon.total_cmp(&b.horizon));

    GroupSummary {
        experiment: first.experiment.clone(),
        system: first.system.clone(),
        z: first.z,
        kappa: first.kappa,
        regime: first.regime.clone(),
        seeds: by_seed.len(),
        slope: (!seed_slopes.is_empty()).then(|| median(&seed_slopes)),
        coverage,
        horizons,
    }
}
