//! Least-squares estimation of the drift matrix from one trajectory.
//!
//! With left-endpoint sums
//! `V = h sum X_k X_k^T`, `M = sum X_k (dX_k - kappa B dU_k)^T` and
//! `S = sum X_k dW_k^T`, the estimate is `A_hat = M^T V^{-1}` and, under the
//! Euler-Maruyama recursion, `A_hat - A = C S^T V^{-1}` holds exactly.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, symmetric_extremes};
use crate::sim::{simulate_with, SimConfig, Step, SystemSpec, Trajectory};
use crate::twofold::{Twofold, TwofoldCholesky, TwofoldMatrix};

/// `lambda_min(V) <= RANK_TOL * lambda_max(V)` switches to the pseudoinverse.
/// Solves run in twofold arithmetic, which stays accurate far beyond the
/// `1e-16` conditioning limit of plain `f64`.
pub const RANK_TOL: f64 = 1e-24;

/// Running left-endpoint sums over a contiguous run of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    p: usize,
    q: usize,
    r: usize,
    step: f64,
    kappa_b: Vec<f64>,
    /// `sum X X^T`, without the factor `h`.
    xx: TwofoldMatrix,
    m: TwofoldMatrix,
    s: Option<TwofoldMatrix>,
    samples: usize,
    x: Vec<Twofold>,
    d: Vec<Twofold>,
    zeros: Vec<f64>,
}

impl CovarianceAccumulator {
    /// Empty accumulator; `with_oracle` enables the noise sum `S`.
    pub fn new(kappa_b: &DMatrix<f64>, r: usize, step: f64, with_oracle: bool) -> Result<Self> {
        let (p, q) = kappa_b.shape();
        if p == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        if !(step > 0.0) {
            return Err(Error::Config(format!("step must be positive, got {step}")));
        }
        let mut kb = Vec::with_capacity(p * q);
        for i in 0..p {
            for j in 0..q {
                kb.push(kappa_b[(i, j)]);
            }
        }
        Ok(CovarianceAccumulator {
            p,
            q,
            r,
            step,
            kappa_b: kb,
            xx: TwofoldMatrix::zeros(p, p),
            m: TwofoldMatrix::zeros(p, p),
            s: with_oracle.then(|| TwofoldMatrix::zeros(p, r)),
            samples: 0,
            x: vec![Twofold::ZERO; p],
            d: vec![Twofold::ZERO; p],
            zeros: vec![0.0; p],
        })
    }

    pub fn for_system(spec: &SystemSpec, step: f64, with_oracle: bool) -> Result<Self> {
        Self::new(&spec.kappa_b(), spec.r(), step, with_oracle)
    }

    /// Adds one step. A missing `dw` permanently disables the oracle sum.
    pub fn push(&mut self, x: &[f64], x_next: &[f64], du: &[f64], dw: Option<&[f64]>) {
        let zeros = std::mem::take(&mut self.zeros);
        self.push_split(x, &zeros, x_next, &zeros, du, dw);
        self.zeros = zeros;
    }

    /// Adds one step whose states are given as `hi + lo` pairs.
    pub fn push_split(
        &mut self,
        x: &[f64],
        x_lo: &[f64],
        x_next: &[f64],
        x_next_lo: &[f64],
        du: &[f64],
        dw: Option<&[f64]>,
    ) {
        debug_assert_eq!(x.len(), self.p);
        debug_assert_eq!(du.len(), self.q);
        for i in 0..self.p {
            let cur = Twofold::from_f64(x[i]) + Twofold::from_f64(x_lo[i]);
            let next = Twofold::from_f64(x_next[i]) + Twofold::from_f64(x_next_lo[i]);
            let mut d = next - cur;
            let row = &self.kappa_b[i * self.q..(i + 1) * self.q];
            for (&b, &u) in row.iter().zip(du) {
                d = d.add_prod(-b, u);
            }
            self.x[i] = cur;
            self.d[i] = d;
        }
        self.xx.add_outer_dd(&self.x, &self.x);
        self.m.add_outer_dd(&self.x, &self.d);
        match (self.s.as_mut(), dw) {
            (Some(s), Some(dw)) => s.add_outer_mixed(&self.x, dw),
            (Some(_), None) => self.s = None,
            _ => {}
        }
        self.samples += 1;
    }

    pub fn push_step(&mut self, step: &Step<'_>) {
        self.push_split(step.x, step.x_lo, step.x_next, step.x_next_lo, step.du, Some(step.dw));
    }

    /// Adds the sums of a segment that follows (or precedes) this one.
    pub fn merge(&mut self, other: &CovarianceAccumulator) -> Result<()> {
        if (self.p, self.q, self.r) != (other.p, other.q, other.r)
            || self.step != other.step
            || self.kappa_b != other.kappa_b
        {
            return Err(Error::Dimension("accumulators describe different systems".into()));
        }
        self.xx.add_assign(&other.xx);
        self.m.add_assign(&other.m);
        self.s = match (self.s.take(), &other.s) {
            (Some(mut a), Some(b)) => {
                a.add_assign(b);
                Some(a)
            }
            _ => None,
        };
        self.samples += other.samples;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn elapsed(&self) -> f64 {
        self.samples as f64 * self.step
    }

    pub fn has_oracle(&self) -> bool {
        self.s.is_some()
    }

    pub fn v(&self) -> DMatrix<f64> {
        self.xx.scaled(self.step).to_matrix()
    }

    pub fn m(&self) -> DMatrix<f64> {
        self.m.to_matrix()
    }

    pub fn s(&self) -> Option<DMatrix<f64>> {
        self.s.as_ref().map(TwofoldMatrix::to_matrix)
    }

    fn v_twofold(&self) -> TwofoldMatrix {
        self.xx.scaled(self.step)
    }
}

/// Accumulates every step of a stored trajectory.
pub fn accumulate(traj: &Trajectory) -> Result<CovarianceAccumulator> {
    let n = traj.steps();
    if n == 0 {
        return Err(Error::Config("trajectory has no steps".into()));
    }
    if traj.kappa_b.nrows() != traj.p || traj.kappa_b.ncols() != traj.q {
        return Err(Error::Config("input gain does not match trajectory dimensions".into()));
    }
    let mut acc = CovarianceAccumulator::new(
        &traj.kappa_b,
        traj.r,
        traj.step,
        traj.noise_increments.is_some(),
    )?;
    for k in 0..n {
        acc.push_split(
            traj.state(k),
            traj.state_lo(k),
            traj.state(k + 1),
            traj.state_lo(k + 1),
            traj.input_increment(k),
            traj.noise_increment(k),
        );
    }
    Ok(acc)
}

/// Twofold Cholesky of `V` together with its extreme eigenvalues.
struct CovarianceSolver {
    chol: TwofoldCholesky,
    min_eig: f64,
}

impl CovarianceSolver {
    /// `None` when `V` is not numerically positive definite at [`RANK_TOL`].
    fn new(acc: &CovarianceAccumulator, max_eig: f64) -> Option<Self> {
        if !(max_eig > 0.0) {
            return None;
        }
        let chol = TwofoldCholesky::new(&acc.v_twofold())?;
        // lambda_min(V) = 1 / lambda_max(V^{-1}); the inverse is accurate in
        // twofold even when the f64 spectrum of V cannot resolve lambda_min
        let inv = chol.solve(&TwofoldMatrix::identity(acc.p)).to_matrix();
        let inv = (&inv + inv.transpose()) * 0.5;
        let (_, inv_max) = symmetric_extremes(&inv);
        let min_eig = 1.0 / inv_max;
        (inv_max > 0.0 && min_eig > RANK_TOL * max_eig).then_some(CovarianceSolver { chol, min_eig })
    }

    fn solve(&self, rhs: &TwofoldMatrix) -> DMatrix<f64> {
        self.chol.solve(rhs).to_matrix()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub a_hat: DMatrix<f64>,
    pub elapsed: f64,
    pub samples: usize,
    pub min_eig_v: f64,
    pub max_eig_v: f64,
    pub cond_v: f64,
    pub used_pseudoinverse: bool,
    pub err_spectral: Option<f64>,
    pub scaled_err: Option<f64>,
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    a_hat: Vec<Vec<f64>>,
    elapsed: f64,
    samples: usize,
    min_eig_v: f64,
    max_eig_v: f64,
    cond_v: f64,
    used_pseudoinverse: bool,
    err_spectral: &'a Option<f64>,
    scaled_err: &'a Option<f64>,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Estimate {
    /// Fills the error fields against the true drift.
    pub fn with_truth(mut self, a_true: &DMatrix<f64>) -> Self {
        let err = spectral_norm(&(&self.a_hat - a_true));
        self.err_spectral = Some(err);
        self.scaled_err = Some(self.elapsed.sqrt() * err);
        self
    }

    pub fn to_json(&self) -> String {
        let record = EstimateRecord {
            a_hat: rows_of(&self.a_hat),
            elapsed: self.elapsed,
            samples: self.samples,
            min_eig_v: self.min_eig_v,
            max_eig_v: self.max_eig_v,
            cond_v: self.cond_v,
            used_pseudoinverse: self.used_pseudoinverse,
            err_spectral: &self.err_spectral,
            scaled_err: &self.scaled_err,
        };
        serde_json::to_string_pretty(&record).expect("estimate fields are serializable")
    }
}

/// `A_hat = M^T V^{-1}`, or `M^T V^+` when `V` is numerically singular.
pub fn estimate(acc: &CovarianceAccumulator) -> Result<Estimate> {
    if acc.samples == 0 {
        return Err(Error::Config("cannot estimate from an empty accumulator".into()));
    }
    let v = acc.v();
    let (f64_min, max) = symmetric_extremes(&v);
    let solver = CovarianceSolver::new(acc, max);
    let used_pseudoinverse = solver.is_none();
    let (a_hat, min) = match solver {
        Some(s) => (s.solve(&acc.m).transpose(), s.min_eig),
        None => {
            let cut = (v.nrows() as f64 * f64::EPSILON * max).max(f64::MIN_POSITIVE);
            let pinv = v
                .clone()
                .pseudo_inverse(cut)
                .map_err(|e| Error::InvalidMatrix(e.to_string()))?;
            ((pinv * acc.m()).transpose(), f64_min)
        }
    };
    Ok(Estimate {
        a_hat,
        elapsed: acc.elapsed(),
        samples: acc.samples,
        min_eig_v: min,
        max_eig_v: max,
        cond_v: if min > 0.0 { max / min } else { f64::INFINITY },
        used_pseudoinverse,
        err_spectral: None,
        scaled_err: None,
    })
}

pub fn estimate_against(acc: &CovarianceAccumulator, truth: &SystemSpec) -> Result<Estimate> {
    Ok(estimate(acc)?.with_truth(&truth.a))
}

/// `||(A_hat - A) - C S^T V^{-1}||_2`; zero in exact arithmetic under Euler-Maruyama.
pub fn error_identity_residual(
    est: &Estimate,
    acc: &CovarianceAccumulator,
    truth: &SystemSpec,
) -> Result<f64> {
    let s = acc.s.as_ref().ok_or(Error::OracleUnavailable)?;
    if est.used_pseudoinverse {
        return Err(Error::SingularCovariance {
            min_eig: est.min_eig_v,
        });
    }
    let solver = CovarianceSolver::new(acc, est.max_eig_v).ok_or(Error::SingularCovariance {
        min_eig: est.min_eig_v,
    })?;
    // V^{-1} S C^T, the transpose of the predicted error
    let predicted = solver.solve(&s.mul_matrix(&truth.c.transpose())).transpose();
    Ok(spectral_norm(&(&est.a_hat - &truth.a - predicted)))
}

/// `||(V_T + I)^{-1/2} S_T||_2`, the self-normalized noise magnitude.
pub fn self_normalized_noise(acc: &CovarianceAccumulator) -> Result<f64> {
    let s = acc.s.as_ref().ok_or(Error::OracleUnavailable)?;
    let mut vbar = acc.v_twofold();
    for i in 0..acc.p {
        vbar.set(i, i, vbar.get(i, i) + Twofold::from_f64(1.0));
    }
    let chol = TwofoldCholesky::new(&vbar).ok_or(Error::SingularCovariance { min_eig: f64::NAN })?;
    // ||L^{-1} S|| equals ||Vbar^{-1/2} S|| since L^{-1} = U Vbar^{-1/2} with U orthogonal
    Ok(spectral_norm(&chol.solve_lower(s).to_matrix()))
}

/// State of a simulation at a requested horizon.
pub struct Checkpoint<'a> {
    pub horizon: f64,
    pub acc: &'a CovarianceAccumulator,
    pub state: &'a [f64],
    /// The simulation stopped before this horizon; `acc` holds the data up to truncation.
    pub truncated: bool,
}

fn checkpoint_indices(config: &SimConfig, checkpoints: &[f64]) -> Result<Vec<usize>> {
    let n = config.steps();
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let k = (t / config.step).round();
        if !(k >= 1.0) || k as usize > n {
            return Err(Error::Config(format!(
                "checkpoint {t} outside the simulated horizon {}",
                config.effective_horizon()
            )));
        }
        let k = k as usize;
        if out.last().is_some_and(|&prev| k <= prev) {
            return Err(Error::Config("checkpoints must be strictly increasing".into()));
        }
        out.push(k);
    }
    Ok(out)
}

/// Simulates once and calls `eval` at every checkpoint with the running sums.
pub fn run_checkpoints<R, F>(
    spec: &SystemSpec,
    config: &SimConfig,
    checkpoints: &[f64],
    mut eval: F,
) -> Result<Vec<R>>
where
    F: FnMut(&Checkpoint<'_>) -> Result<R>,
{
    let indices = checkpoint_indices(config, checkpoints)?;
    let mut acc = CovarianceAccumulator::for_system(spec, config.step, true)?;
    let mut results = Vec::with_capacity(indices.len());
    let mut failure = None;
    let mut last_state: Vec<f64> = spec.x0.iter().copied().collect();
    simulate_with(spec, config, |step| {
        acc.push_step(step);
        let done = step.k + 1;
        if failure.is_none() && results.len() < indices.len() && indices[results.len()] == done {
            let cp = Checkpoint {
                horizon: checkpoints[results.len()],
                acc: &acc,
                state: step.x_next,
                truncated: false,
            };
            match eval(&cp) {
                Ok(r) => results.push(r),
                Err(e) => failure = Some(e),
            }
        }
        if results.len() == indices.len() || failure.is_some() {
            return;
        }
        last_state.copy_from_slice(step.x_next);
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    while results.len() < indices.len() {
        let cp = Checkpoint {
            horizon: checkpoints[results.len()],
            acc: &acc,
            state: &last_state,
            truncated: true,
        };
        results.push(eval(&cp)?);
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub horizon: f64,
    pub err: f64,
    pub scaled_err: f64,
    pub min_eig_v: f64,
    pub max_eig_v: f64,
    pub used_pseudoinverse: bool,
    pub truncated: bool,
}

/// Estimation error at each checkpoint of a single simulated run.
pub fn scaled_error_series(
    spec: &SystemSpec,
    config: &SimConfig,
    checkpoints: &[f64],
) -> Result<Vec<SeriesPoint>> {
    run_checkpoints(spec, config, checkpoints, |cp| {
        let est = estimate_against(cp.acc, spec)?;
        let err = est.err_spectral.expect("truth supplied");
        Ok(SeriesPoint {
            horizon: cp.horizon,
            err,
            scaled_err: cp.horizon.sqrt() * err,
            min_eig_v: est.min_eig_v,
            max_eig_v: est.max_eig_v,
            used_pseudoinverse: est.used_pseudoinverse,
            truncated: cp.truncated,
        })
    })
}
