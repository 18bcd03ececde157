use ctsysid_core::bounds::{regularized_radius, state_norm_bound, ConstantsUsed, LilBoundary};
use ctsysid_core::estimator::{estimate_against, run_checkpoints, self_normalized_noise};
use ctsysid_core::sim::{simulate_with, IncrementSource, SimConfig};
use ctsysid_core::{reactor_system, scalar_system, BoundReport, Regime, SystemAnalysis, SystemSpec};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliResult;
use crate::output::{sort_rows, InitialState, ResultRow, RunMeta, SystemMeta};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Model {
    Reactor(f64),
    Scalar(f64),
}

/// A system with its amplification, analysed once for all seeds.
struct Case {
    model: Model,
    kappa: f64,
    analysis: SystemAnalysis,
}

impl Case {
    fn new(model: Model, kappa: f64) -> CliResult<Self> {
        let analysis = spec_for(model, kappa, 0)?.analysis()?;
        Ok(Case { model, kappa, analysis })
    }

    fn spec(&self, seed: u64) -> CliResult<SystemSpec> {
        spec_for(self.model, self.kappa, seed)
    }

    fn name(&self) -> &'static str {
        match self.model {
            Model::Reactor(_) => "reactor",
            Model::Scalar(_) => "scalar",
        }
    }

    fn z(&self) -> Option<f64> {
        match self.model {
            Model::Reactor(z) => Some(z),
            Model::Scalar(_) => None,
        }
    }

    fn row(&self, cfg: &ExperimentConfig, seed: u64, t: f64) -> ResultRow {
        ResultRow::blank(
            cfg.experiment.as_str(),
            self.name(),
            self.z(),
            self.analysis.regime().as_str(),
            self.kappa,
            seed,
            t,
        )
    }

    fn meta(&self) -> SystemMeta {
        let k = &self.analysis.constants;
        SystemMeta {
            system: self.name().to_string(),
            z: self.z(),
            kappa: self.kappa,
            regime: self.analysis.regime().as_str().to_string(),
            lambda1: self.analysis.lambda1(),
            l_star: self.analysis.largest_block(),
            jordan_warning: self.analysis.spectrum.jordan_warning,
            c: k.c,
            beta: k.beta,
            p_star: k.p_star,
            cond_p: k.cond_p,
        }
    }
}

fn spec_for(model: Model, kappa: f64, seed: u64) -> CliResult<SystemSpec> {
    Ok(match model {
        Model::Reactor(z) => reactor_system(z, kappa, seed)?,
        Model::Scalar(a) => scalar_system(a, kappa)?,
    })
}

fn cases(cfg: &ExperimentConfig) -> CliResult<Vec<Case>> {
    let mut out = Vec::new();
    if let (Some(s), Some(kappa)) = (cfg.scalar, cfg.scalar_kappa()) {
        out.push(Case::new(Model::Scalar(s.a), kappa)?);
    }
    for &z in &cfg.z {
        out.push(Case::new(Model::Reactor(z), cfg.kappa_for(z)?)?);
    }
    Ok(out)
}

fn sim_config(cfg: &ExperimentConfig, seed: u64) -> SimConfig {
    SimConfig::new(cfg.horizon, cfg.dt, seed).with_integrator(cfg.integrator)
}

pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub meta: RunMeta,
}

/// Runs every (system, seed) pair in parallel and returns rows sorted by
/// system, `z`, seed and horizon.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunOutput> {
    cfg.validate()?;
    let cases = if cfg.experiment == Experiment::LilMc { Vec::new() } else { cases(cfg)? };
    let seeds: Vec<u64> = cfg.seeds().collect();
    let jobs: Vec<(Option<&Case>, u64)> = if cfg.experiment == Experiment::LilMc {
        seeds.iter().map(|&s| (None, s)).collect()
    } else {
        cases.iter().flat_map(|c| seeds.iter().map(move |&s| (Some(c), s))).collect()
    };
    let chunks = jobs
        .par_iter()
        .map(|&(case, seed)| match (cfg.experiment, case) {
            (Experiment::Fig1 | Experiment::EigGrowth, Some(c)) => estimation_rows(cfg, c, seed),
            (Experiment::Lemma1Mc, Some(c)) => lemma1_rows(cfg, c, seed),
            (Experiment::EnvelopeMc, Some(c)) => envelope_rows(cfg, c, seed),
            _ => lil_rows(cfg, seed),
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    sort_rows(&mut rows);

    let mut initial_states = Vec::new();
    for case in &cases {
        for &seed in &seeds {
            initial_states.push(InitialState {
                system: case.name().to_string(),
                z: case.z(),
                seed,
                x0: case.spec(seed)?.x0.iter().copied().collect(),
            });
        }
    }
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        systems: cases.iter().map(Case::meta).collect(),
        initial_states,
    };
    Ok(RunOutput { rows, meta })
}

fn estimation_rows(cfg: &ExperimentConfig, case: &Case, seed: u64) -> CliResult<Vec<ResultRow>> {
    let spec = case.spec(seed)?;
    let rows = run_checkpoints(&spec, &sim_config(cfg, seed), &cfg.checkpoints(), |cp| {
        let est = estimate_against(cp.acc, &spec)?;
        let v = cp.acc.v();
        let report = BoundReport::new(&case.analysis, &v, cp.horizon, cfg.delta)?;
        let err = est.err_spectral.expect("truth supplied");
        let mut row = case.row(cfg, seed, cp.horizon);
        row.err_spectral = Some(err);
        row.scaled_err = Some(cp.horizon.sqrt() * err);
        row.lambda_min_V = Some(est.min_eig_v);
        row.lambda_max_V = Some(est.max_eig_v);
        row.y_radius = Some(report.y_radius);
        row.covmin_bound = Some(report.covmin_bound);
        row.covmax_bound = Some(report.covmax_bound);
        row.truncated = cp.truncated;
        Ok(row)
    })?;
    Ok(rows)
}

/// `||(V_T + I)^{-1/2} S_T||` against the radius with `V = I`, where `S_T`
/// integrates the state against the `r`-dimensional noise alone.
fn lemma1_rows(cfg: &ExperimentConfig, case: &Case, seed: u64) -> CliResult<Vec<ResultRow>> {
    let spec = case.spec(seed)?;
    let r = spec.r();
    let rows = run_checkpoints(&spec, &sim_config(cfg, seed), &cfg.checkpoints(), |cp| {
        let mut row = case.row(cfg, seed, cp.horizon);
        row.mc_stat = Some(self_normalized_noise(cp.acc)?);
        row.mc_bound = Some(regularized_radius(&cp.acc.v(), r, cfg.delta)?);
        row.truncated = cp.truncated;
        Ok(row)
    })?;
    Ok(rows)
}

/// Running maximum of `B_t / boundary(t)` for a standard Brownian path; a
/// value above one is a crossing.
fn lil_rows(cfg: &ExperimentConfig, seed: u64) -> CliResult<Vec<ResultRow>> {
    let boundary = LilBoundary::new(cfg.delta, 2.0, std::f64::consts::E)?;
    let source = IncrementSource::new(seed, cfg.dt);
    let checkpoints = cfg.checkpoints();
    let mut rows = Vec::with_capacity(checkpoints.len());
    let mut b = 0.0;
    let mut sup = f64::NEG_INFINITY;
    let mut dw = [0.0];
    let mut next = 0;
    let steps = (cfg.horizon / cfg.dt).round() as u64;
    for k in 0..steps {
        source.fill(k, &mut [], &mut dw, &mut []);
        b += dw[0];
        let t = (k + 1) as f64 * cfg.dt;
        sup = sup.max(b / boundary.at(t));
        while next < checkpoints.len() && (checkpoints[next] / cfg.dt).round() as u64 == k + 1 {
            let mut row = ResultRow::blank(cfg.experiment.as_str(), "brownian", None, "", 1.0, seed, checkpoints[next]);
            row.mc_stat = Some(sup);
            row.mc_bound = Some(1.0);
            rows.push(row);
            next += 1;
        }
    }
    Ok(rows)
}

/// Running maximum over `t >= 1` of `||X_t|| / bound(t)` with the
/// high-probability state-norm bound of the system's regime.
fn envelope_rows(cfg: &ExperimentConfig, case: &Case, seed: u64) -> CliResult<Vec<ResultRow>> {
    let spec = case.spec(seed)?;
    let regime = case.analysis.regime();
    let consts = ConstantsUsed::from_analysis(&case.analysis);
    // stable bounds are constant in time
    let fixed = if regime == Regime::Stable {
        Some(state_norm_bound(regime, &consts, 1.0, cfg.delta)?)
    } else {
        None
    };
    let first = (1.0 / cfg.dt).round() as usize;

    let checkpoints = cfg.checkpoints();
    let sim = sim_config(cfg, seed);
    let mut rows = Vec::with_capacity(checkpoints.len());
    let mut sup = 0.0f64;
    let mut failure = None;
    let outcome = simulate_with(&spec, &sim, |step| {
        let done = step.k + 1;
        if failure.is_some() {
            return;
        }
        if done >= first {
            let t = done as f64 * cfg.dt;
            let bound = match fixed {
                Some(b) => b,
                None => match state_norm_bound(regime, &consts, t, cfg.delta) {
                    Ok(b) => b,
                    Err(e) => {
                        failure = Some(e);
                        return;
                    }
                },
            };
            let norm = step.x_next.iter().map(|v| v * v).sum::<f64>().sqrt();
            sup = sup.max(norm / bound);
        }
        while rows.len() < checkpoints.len() && (checkpoints[rows.len()] / cfg.dt).round() as usize == done {
            let mut row = case.row(cfg, seed, checkpoints[rows.len()]);
            row.mc_stat = Some(sup);
            row.mc_bound = Some(1.0);
            rows.push(row);
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    while rows.len() < checkpoints.len() {
        let mut row = case.row(cfg, seed, checkpoints[rows.len()]);
        row.mc_stat = Some(sup);
        row.mc_bound = Some(1.0);
        row.truncated = outcome.truncated_at.is_some();
        rows.push(row);
    }
    Ok(rows)
}
