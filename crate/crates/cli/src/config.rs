use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ctsysid_core::Integrator;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fig1,
    Lemma1Mc,
    LilMc,
    EigGrowth,
    EnvelopeMc,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Fig1,
        Experiment::Lemma1Mc,
        Experiment::LilMc,
        Experiment::EigGrowth,
        Experiment::EnvelopeMc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1",
            Experiment::Lemma1Mc => "lemma1-mc",
            Experiment::LilMc => "lil-mc",
            Experiment::EigGrowth => "eig-growth",
            Experiment::EnvelopeMc => "envelope-mc",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment '{s}'")))
    }
}

/// The scalar system `dX = a X dt + kappa dU + dW` run next to the reactor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarConfig {
    #[serde(default = "default_scalar_a")]
    pub a: f64,
    #[serde(default = "default_scalar_kappa")]
    pub kappa: f64,
}

fn default_scalar_a() -> f64 {
    -1.0
}

fn default_scalar_kappa() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_z")]
    pub z: Vec<f64>,
    /// Keyed by the decimal form of each `z`.
    #[serde(default = "default_kappa")]
    pub kappa: BTreeMap<String, f64>,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub stride: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Replaces every entry of `kappa`.
    #[serde(default)]
    pub kappa_override: Option<f64>,
    /// Adds the scalar system to the reactor runs.
    #[serde(default)]
    pub scalar: Option<ScalarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_z() -> Vec<f64> {
    vec![5.0, 10.0, 15.0]
}

fn default_kappa() -> BTreeMap<String, f64> {
    [("5", 1.0), ("10", 2.0), ("15", 5.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

fn default_trajectories() -> usize {
    20
}

fn default_horizon() -> f64 {
    50.0
}

fn default_stride() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_delta() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            z: default_z(),
            kappa: default_kappa(),
            trajectories: default_trajectories(),
            horizon: default_horizon(),
            stride: default_stride(),
            dt: default_dt(),
            delta: default_delta(),
            seed_base: 0,
            integrator: Integrator::default(),
            kappa_override: None,
            scalar: None,
            output: None,
        }
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.trajectories == 0 {
            return fail("trajectories must be positive".into());
        }
        if !(self.dt > 0.0) || !(self.horizon >= self.dt) {
            return fail(format!("need 0 < dt <= horizon, got dt = {}, horizon = {}", self.dt, self.horizon));
        }
        if !(self.stride > 0.0) || self.stride > self.horizon {
            return fail(format!("stride must lie in (0, horizon], got {}", self.stride));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.experiment != Experiment::LilMc && self.z.is_empty() && self.scalar.is_none() {
            return fail("no system selected: give z values or a scalar system".into());
        }
        if let Some(k) = self.kappa_override {
            if !(k >= 1.0) {
                return fail(format!("kappa override must be at least 1, got {k}"));
            }
        }
        for &z in &self.z {
            if self.kappa_override.is_none() && self.lookup_kappa(z).is_none() {
                return fail(format!("kappa map has no entry for z = {z}"));
            }
        }
        for key in self.kappa.keys() {
            if key.parse::<f64>().is_err() {
                return fail(format!("kappa key '{key}' is not a number"));
            }
        }
        Ok(())
    }

    fn lookup_kappa(&self, z: f64) -> Option<f64> {
        self.kappa
            .iter()
            .find(|(k, _)| k.parse::<f64>().is_ok_and(|v| v == z))
            .map(|(_, &v)| v)
    }

    /// Input amplification for reactor gain `z`.
    pub fn kappa_for(&self, z: f64) -> CliResult<f64> {
        self.kappa_override
            .or_else(|| self.lookup_kappa(z))
            .ok_or_else(|| CliError::Config(format!("kappa map has no entry for z = {z}")))
    }

    pub fn scalar_kappa(&self) -> Option<f64> {
        self.scalar.map(|s| self.kappa_override.unwrap_or(s.kappa))
    }

    /// Checkpoint times `stride, 2 stride, ...` up to the horizon.
    pub fn checkpoints(&self) -> Vec<f64> {
        let n = (self.horizon / self.stride + 1e-9).floor() as usize;
        (1..=n).map(|i| i as f64 * self.stride).collect()
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.trajectories as u64).map(move |i| self.seed_base + i)
    }
}
