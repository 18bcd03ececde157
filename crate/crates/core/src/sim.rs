//! Trajectories of `dX = A X dt + kappa B dU + C dW` on a uniform grid.
//!
//! Increments are counter-based: the Gaussian draws of step `k` are a pure
//! function of `(seed, k)`, so any step can be replayed without simulating
//! its predecessors, and independent trajectories can be generated in any
//! order.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matrix_exponential, symmetric_extremes, SystemAnalysis};
use crate::twofold::Twofold;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_OVERFLOW_CAP: f64 = 1e12;

/// Stream reserved for the initial state, never used by a step.
const INITIAL_STATE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub kappa: f64,
}

impl SystemSpec {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        x0: DVector<f64>,
        kappa: f64,
    ) -> Result<Self> {
        let p = a.nrows();
        if p == 0 || a.ncols() != p {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != p || c.nrows() != p || x0.len() != p {
            return Err(Error::Dimension(format!(
                "state dimension {p}: B has {} rows, C has {} rows, X0 has {} entries",
                b.nrows(),
                c.nrows(),
                x0.len()
            )));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|x| x.is_finite());
        if !finite(&a) || !finite(&b) || !finite(&c) || !x0.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry in system matrices".into()));
        }
        if !(kappa >= 1.0) || !kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be finite and >= 1, got {kappa}")));
        }
        Ok(SystemSpec { a, b, c, x0, kappa })
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn q(&self) -> usize {
        self.b.ncols()
    }

    pub fn r(&self) -> usize {
        self.c.ncols()
    }

    /// The effective input matrix `kappa B`.
    pub fn kappa_b(&self) -> DMatrix<f64> {
        &self.b * self.kappa
    }

    /// `lambda_min(B B^T)`, or an error when it is not positive.
    pub fn check_assumption1(&self) -> Result<f64> {
        let (c, max) = symmetric_extremes(&(&self.b * self.b.transpose()));
        if c > 1e-14 * max && c > 0.0 {
            Ok(c)
        } else {
            Err(Error::Assumption1Violation { c })
        }
    }

    pub fn analysis(&self) -> Result<SystemAnalysis> {
        SystemAnalysis::new(&self.a, &self.b, &self.c, self.kappa)
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), self.x0.clone(), kappa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    EulerMaruyama,
    ExactLti,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub step: f64,
    pub integrator: Integrator,
    pub overflow_cap: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(horizon: f64, step: f64, seed: u64) -> Self {
        SimConfig {
            horizon,
            step,
            integrator: Integrator::EulerMaruyama,
            overflow_cap: DEFAULT_OVERFLOW_CAP,
            seed,
        }
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon >= self.step) || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "horizon {} must be finite and at least one step {}",
                self.horizon, self.step
            )));
        }
        if !(self.overflow_cap > 0.0) {
            return Err(Error::Config("overflow cap must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps `N = round(T / h)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// The horizon actually simulated, `N h`.
    pub fn effective_horizon(&self) -> f64 {
        self.steps() as f64 * self.step
    }
}

fn step_rng(base: &ChaCha8Rng, stream: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(stream);
    rng
}

/// Source of the per-step Gaussian increments of one seed.
#[derive(Debug, Clone)]
pub struct IncrementSource {
    base: ChaCha8Rng,
    sqrt_h: f64,
}

impl IncrementSource {
    pub fn new(seed: u64, h: f64) -> Self {
        IncrementSource {
            base: ChaCha8Rng::seed_from_u64(seed),
            sqrt_h: h.sqrt(),
        }
    }

    /// Fills `du` and `dw` with `N(0, h I)` draws for step `k`, then `extra`
    /// with standard normals from the same stream.
    pub fn fill(&self, k: u64, du: &mut [f64], dw: &mut [f64], extra: &mut [f64]) {
        let mut rng = step_rng(&self.base, k);
        for x in du.iter_mut().chain(dw.iter_mut()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = self.sqrt_h * z;
        }
        for x in extra.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
    }
}

/// `(dU_k, dW_k)` for step `k` of the trajectory with the given seed.
pub fn draw_increments(seed: u64, k: u64, q: usize, r: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut du = vec![0.0; q];
    let mut dw = vec![0.0; r];
    IncrementSource::new(seed, h).fill(k, &mut du, &mut dw, &mut []);
    (du, dw)
}

/// A standard normal vector drawn from the stream reserved for initial states.
pub fn initial_state_normal(seed: u64, p: usize) -> DVector<f64> {
    let mut rng = step_rng(&ChaCha8Rng::seed_from_u64(seed), INITIAL_STATE_STREAM);
    DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng))
}

/// One step of a simulation as seen by a streaming consumer. States are
/// split as `x + x_lo`, with `x` the nearest `f64`.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub k: usize,
    pub x: &'a [f64],
    pub x_lo: &'a [f64],
    pub x_next: &'a [f64],
    pub x_next_lo: &'a [f64],
    pub du: &'a [f64],
    pub dw: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// Steps actually taken.
    pub steps: usize,
    /// Index of the first state whose norm exceeded the overflow cap.
    pub truncated_at: Option<usize>,
}

/// Precomputed one-step map of the exact LTI discretization.
struct ExactStep {
    phi: Vec<f64>,
    /// `Phi_1 kappa B / h`, `Phi_1 C / h` with `Phi_1 = int_0^h e^{A s} ds`.
    gain_u: Vec<f64>,
    gain_w: Vec<f64>,
    /// Square root of the residual covariance once the increments are known.
    resid: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

impl ExactStep {
    fn new(spec: &SystemSpec, h: f64) -> Result<Self> {
        let p = spec.p();
        let kb = spec.kappa_b();
        let g = &kb * kb.transpose() + &spec.c * spec.c.transpose();

        let mut aug = DMatrix::<f64>::zeros(2 * p, 2 * p);
        aug.view_mut((0, 0), (p, p)).copy_from(&spec.a);
        aug.view_mut((0, p), (p, p)).fill_with_identity();
        let e = matrix_exponential(&aug, h)?;
        let phi = e.view((0, 0), (p, p)).into_owned();
        let phi1 = e.view((0, p), (p, p)).into_owned();

        let mut van_loan = DMatrix::<f64>::zeros(2 * p, 2 * p);
        van_loan.view_mut((0, 0), (p, p)).copy_from(&(-&spec.a));
        van_loan.view_mut((0, p), (p, p)).copy_from(&g);
        van_loan.view_mut((p, p), (p, p)).copy_from(&spec.a.transpose());
        let f = matrix_exponential(&van_loan, h)?;
        let f12 = f.view((0, p), (p, p)).into_owned();
        let f22 = f.view((p, p), (p, p)).into_owned();
        let q = f22.transpose() * f12;

        let explained = &phi1 * &g * phi1.transpose() / h;
        let resid = q - explained;
        let resid = (&resid + resid.transpose()) * 0.5;
        let eig = SymmetricEigen::new(resid);
        let sqrt_vals = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();

        Ok(ExactStep {
            phi: row_major(&phi),
            gain_u: row_major(&(&phi1 * &kb / h)),
            gain_w: row_major(&(&phi1 * &spec.c / h)),
            resid: row_major(&root),
        })
    }
}

/// `out_i += sum_j m_ij v_j` with twofold `v`.
#[inline]
fn mat_vec_dd(out: &mut [Twofold], m: &[f64], v: &[Twofold]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        for (&mij, vj) in m[i * cols..(i + 1) * cols].iter().zip(v) {
            *o = *o + vj.mul_f64(mij);
        }
    }
}

/// `out_i += sum_j m_ij v_j` with exact products of plain `v`.
#[inline]
fn mat_vec_exact(out: &mut [Twofold], m: &[f64], v: &[f64]) {
    let cols = v.len();
    if cols == 0 {
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        for (&mij, &vj) in m[i * cols..(i + 1) * cols].iter().zip(v) {
            *o = o.add_prod(mij, vj);
        }
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn split(src: &[Twofold], hi: &mut [f64], lo: &mut [f64]) {
    for ((s, h), l) in src.iter().zip(hi.iter_mut()).zip(lo.iter_mut()) {
        *h = s.hi;
        *l = s.lo;
    }
}

/// Runs the simulation and hands every step to `on_step` without storing the path.
///
/// The state is propagated in twofold arithmetic, so the stored pair
/// `x + x_lo` satisfies the one-step recursion to about `1e-32` relative.
pub fn simulate_with<F>(spec: &SystemSpec, config: &SimConfig, mut on_step: F) -> Result<SimOutcome>
where
    F: FnMut(&Step<'_>),
{
    config.validate()?;
    let (p, q, r) = (spec.p(), spec.q(), spec.r());
    let h = config.step;
    let n = config.steps();
    let source = IncrementSource::new(config.seed, h);

    let a = row_major(&spec.a);
    let kb = row_major(&spec.kappa_b());
    let c = row_major(&spec.c);
    let exact = match config.integrator {
        Integrator::EulerMaruyama => None,
        Integrator::ExactLti => Some(ExactStep::new(spec, h)?),
    };

    let mut x: Vec<Twofold> = spec.x0.iter().map(|&v| Twofold::from_f64(v)).collect();
    let mut x_next = vec![Twofold::ZERO; p];
    let mut drift = vec![Twofold::ZERO; p];
    let (mut x_hi, mut x_lo) = (vec![0.0; p], vec![0.0; p]);
    let (mut nx_hi, mut nx_lo) = (vec![0.0; p], vec![0.0; p]);
    split(&x, &mut x_hi, &mut x_lo);
    let mut du = vec![0.0; q];
    let mut dw = vec![0.0; r];
    let mut z = vec![0.0; if exact.is_some() { p } else { 0 }];

    if !(norm2(&x_hi) <= config.overflow_cap) {
        return Ok(SimOutcome {
            steps: 0,
            truncated_at: Some(0),
        });
    }
    for k in 0..n {
        source.fill(k as u64, &mut du, &mut dw, &mut z);
        match &exact {
            None => {
                drift.fill(Twofold::ZERO);
                mat_vec_dd(&mut drift, &a, &x);
                for ((o, xi), d) in x_next.iter_mut().zip(&x).zip(&drift) {
                    *o = *xi + d.mul_f64(h);
                }
                mat_vec_exact(&mut x_next, &kb, &du);
                mat_vec_exact(&mut x_next, &c, &dw);
            }
            Some(ex) => {
                x_next.fill(Twofold::ZERO);
                mat_vec_dd(&mut x_next, &ex.phi, &x);
                mat_vec_exact(&mut x_next, &ex.gain_u, &du);
                mat_vec_exact(&mut x_next, &ex.gain_w, &dw);
                mat_vec_exact(&mut x_next, &ex.resid, &z);
            }
        }
        split(&x_next, &mut nx_hi, &mut nx_lo);
        on_step(&Step {
            k,
            x: &x_hi,
            x_lo: &x_lo,
            x_next: &nx_hi,
            x_next_lo: &nx_lo,
            du: &du,
            dw: &dw,
        });
        std::mem::swap(&mut x, &mut x_next);
        std::mem::swap(&mut x_hi, &mut nx_hi);
        std::mem::swap(&mut x_lo, &mut nx_lo);
        if !(norm2(&x_hi) <= config.overflow_cap) {
            return Ok(SimOutcome {
                steps: k + 1,
                truncated_at: Some(k + 1),
            });
        }
    }
    Ok(SimOutcome {
        steps: n,
        truncated_at: None,
    })
}

/// A stored trajectory. Row-major flat buffers: `states` holds `steps + 1`
/// rows of length `p`, `input_increments` and `noise_increments` one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub step: f64,
    pub kappa_b: DMatrix<f64>,
    pub states: Vec<f64>,
    /// Low-order parts of the states; the simulated state is `states + states_lo`.
    pub states_lo: Vec<f64>,
    pub input_increments: Vec<f64>,
    /// Oracle-only: the estimator never reads these.
    pub noise_increments: Option<Vec<f64>>,
    pub truncated_at: Option<usize>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() / self.p - 1
    }

    pub fn len_states(&self) -> usize {
        self.states.len() / self.p
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.p..(k + 1) * self.p]
    }

    pub fn state_lo(&self, k: usize) -> &[f64] {
        &self.states_lo[k * self.p..(k + 1) * self.p]
    }

    pub fn input_increment(&self, k: usize) -> &[f64] {
        &self.input_increments[k * self.q..(k + 1) * self.q]
    }

    pub fn noise_increment(&self, k: usize) -> Option<&[f64]> {
        self.noise_increments
            .as_ref()
            .map(|w| &w[k * self.r..(k + 1) * self.r])
    }

    pub fn truncated(&self) -> bool {
        self.truncated_at.is_some()
    }

    /// Drops the oracle noise increments.
    pub fn without_oracle(mut self) -> Self {
        self.noise_increments = None;
        self
    }

    /// Steps `[from, to)` as a trajectory of their own.
    pub fn segment(&self, from: usize, to: usize) -> Trajectory {
        assert!(from <= to && to <= self.steps());
        Trajectory {
            p: self.p,
            q: self.q,
            r: self.r,
            step: self.step,
            kappa_b: self.kappa_b.clone(),
            states: self.states[from * self.p..(to + 1) * self.p].to_vec(),
            states_lo: self.states_lo[from * self.p..(to + 1) * self.p].to_vec(),
            input_increments: self.input_increments[from * self.q..to * self.q].to_vec(),
            noise_increments: self
                .noise_increments
                .as_ref()
                .map(|w| w[from * self.r..to * self.r].to_vec()),
            truncated_at: None,
        }
    }

    /// Columnar export: one row per grid point, increments blank on the last row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Config(format!("trajectory export failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string(), "t".to_string()];
        header.extend((1..=self.p).map(|i| format!("X_{i}")));
        header.extend((1..=self.q).map(|i| format!("dU_{i}")));
        if self.noise_increments.is_some() {
            header.extend((1..=self.r).map(|i| format!("dW_{i}[oracle]")));
        }
        header.push("truncated".into());
        w.write_record(&header).map_err(io)?;

        let n = self.steps();
        let flag = if self.truncated() { "1" } else { "0" };
        for k in 0..=n {
            let mut row = vec![k.to_string(), format!("{:e}", self.time(k))];
            row.extend(self.state(k).iter().map(|v| format!("{v:e}")));
            if k < n {
                row.extend(self.input_increment(k).iter().map(|v| format!("{v:e}")));
                if let Some(dw) = self.noise_increment(k) {
                    row.extend(dw.iter().map(|v| format!("{v:e}")));
                }
            } else {
                let blanks = self.q + if self.noise_increments.is_some() { self.r } else { 0 };
                row.extend(std::iter::repeat_n(String::new(), blanks));
            }
            row.push(flag.into());
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(format!("trajectory export failed: {e}")))?;
        Ok(())
    }
}

pub fn simulate_trajectory(spec: &SystemSpec, config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let (p, q, r) = (spec.p(), spec.q(), spec.r());
    let n = config.steps();
    let mut states = Vec::with_capacity((n + 1) * p);
    states.extend(spec.x0.iter());
    let mut states_lo = vec![0.0; p];
    states_lo.reserve(n * p);
    let mut du_all = Vec::with_capacity(n * q);
    let mut dw_all = Vec::with_capacity(n * r);
    let outcome = simulate_with(spec, config, |s| {
        states.extend_from_slice(s.x_next);
        states_lo.extend_from_slice(s.x_next_lo);
        du_all.extend_from_slice(s.du);
        dw_all.extend_from_slice(s.dw);
    })?;
    Ok(Trajectory {
        p,
        q,
        r,
        step: config.step,
        kappa_b: spec.kappa_b(),
        states,
        states_lo,
        input_increments: du_all,
        noise_increments: Some(dw_all),
        truncated_at: outcome.truncated_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(a: f64, b: f64, c: f64, x0: f64) -> SystemSpec {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        SystemSpec::new(m(a), m(b), m(c), DVector::from_element(1, x0), 1.0).unwrap()
    }

    #[test]
    fn spec_validation() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let b = DMatrix::<f64>::zeros(2, 1);
        let bad_c = DMatrix::<f64>::zeros(3, 1);
        let x0 = DVector::zeros(2);
        assert!(SystemSpec::new(a.clone(), b.clone(), bad_c, x0.clone(), 1.0).is_err());
        assert!(SystemSpec::new(a.clone(), b.clone(), b.clone(), x0.clone(), 0.5).is_err());
        let ok = SystemSpec::new(a, b.clone(), b, x0, 2.0).unwrap();
        assert!(matches!(ok.check_assumption1(), Err(Error::Assumption1Violation { .. })));
    }

    #[test]
    fn step_count_rounds() {
        let cfg = SimConfig::new(1.0, 0.3, 0);
        assert_eq!(cfg.steps(), 3);
        assert_relative_eq!(cfg.effective_horizon(), 0.9, max_relative = 1e-15);
        assert!(SimConfig::new(0.1, 0.2, 0).validate().is_err());
        assert!(SimConfig::new(1.0, 0.0, 0).validate().is_err());
    }

    #[test]
    fn increments_are_addressable_per_step() {
        let (du, dw) = draw_increments(9, 1234, 2, 3, 0.01);
        let source = IncrementSource::new(9, 0.01);
        let mut du2 = vec![0.0; 2];
        let mut dw2 = vec![0.0; 3];
        source.fill(0, &mut du2, &mut dw2, &mut []);
        source.fill(1234, &mut du2, &mut dw2, &mut []);
        assert_eq!(du, du2);
        assert_eq!(dw, dw2);
        let (other, _) = draw_increments(10, 1234, 2, 3, 0.01);
        assert_ne!(du, other);
    }

    #[test]
    fn increment_moments() {
        let h = 1e-3;
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|k| draw_increments(42, k, 1, 0, h).0[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 4.0 * (h / n as f64).sqrt(), "mean {mean}");
        assert!((var / h - 1.0).abs() < 0.02, "variance ratio {}", var / h);
        let lag1 = draws.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>()
            / (n as f64 - 1.0)
            / var;
        assert!(lag1.abs() < 4.0 / (n as f64).sqrt(), "lag-1 autocorrelation {lag1}");
    }

    #[test]
    fn euler_maruyama_recursion_holds() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, -0.5, -0.3]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let c = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, 0.3]);
        let spec = SystemSpec::new(a.clone(), b.clone(), c.clone(), DVector::from_vec(vec![1.0, -1.0]), 3.0)
            .unwrap();
        let cfg = SimConfig::new(5.0, 1e-2, 3);
        let traj = simulate_trajectory(&spec, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        let mut max_x: f64 = 0.0;
        for k in 0..traj.steps() {
            let x = DVector::from_column_slice(traj.state(k));
            let x1 = DVector::from_column_slice(traj.state(k + 1));
            let du = DVector::from_column_slice(traj.input_increment(k));
            let dw = DVector::from_column_slice(traj.noise_increment(k).unwrap());
            let resid = &x1 - &x - &a * &x * cfg.step - &b * &du * 3.0 - &c * &dw;
            worst = worst.max(resid.norm());
            max_x = max_x.max(x.norm());
        }
        assert!(worst <= 1e-12 * max_x, "{worst} vs {max_x}");
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = scalar(-1.0, 1.0, 1.0, 0.5);
        for integ in [Integrator::EulerMaruyama, Integrator::ExactLti] {
            let cfg = SimConfig::new(2.0, 1e-3, 77).with_integrator(integ);
            let t1 = simulate_trajectory(&spec, &cfg).unwrap();
            let t2 = simulate_trajectory(&spec, &cfg).unwrap();
            assert_eq!(t1, t2);
            let bits = |t: &Trajectory| t.states.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&t1), bits(&t2));
        }
    }

    #[test]
    fn exact_integrator_deterministic_lti() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-0.7, 0.2]));
        let zero = DMatrix::<f64>::zeros(2, 2);
        let x0 = DVector::from_vec(vec![1.5, -2.0]);
        let spec = SystemSpec::new(a, zero.clone(), zero, x0, 1.0).unwrap();
        let cfg = SimConfig::new(10.0, 1e-2, 5).with_integrator(Integrator::ExactLti);
        let traj = simulate_trajectory(&spec, &cfg).unwrap();
        let last = traj.state(traj.steps());
        assert_relative_eq!(last[0], 1.5 * (-7.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(last[1], -2.0 * (2.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn ou_stationary_variance() {
        // dX = -X dt + dW has stationary variance 1/2
        let spec = SystemSpec::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            1.0,
        )
        .unwrap();
        for integ in [Integrator::EulerMaruyama, Integrator::ExactLti] {
            // a time average over 100 units has ~15% spread; 1e4 units brings it to ~1%
            let cfg = SimConfig::new(10_000.0, 1e-3, 11).with_integrator(integ);
            let mut sum_sq = 0.0;
            let mut count = 0usize;
            simulate_with(&spec, &cfg, |s| {
                // discard a burn-in of 5 time units
                if s.k >= 5000 {
                    sum_sq += s.x_next[0] * s.x_next[0];
                    count += 1;
                }
            })
            .unwrap();
            let var = sum_sq / count as f64;
            assert!((var / 0.5 - 1.0).abs() < 0.05, "{integ:?}: variance {var}");
        }
    }

    #[test]
    fn brownian_second_moment() {
        // A = 0, B = 0, C = I_3: X_T = W_T and E|W_T|^2 = 3T
        let p = 3;
        let spec = SystemSpec::new(
            DMatrix::zeros(p, p),
            DMatrix::zeros(p, 1),
            DMatrix::identity(p, p),
            DVector::zeros(p),
            1.0,
        )
        .unwrap();
        let horizon = 2.0;
        let seeds = 1000;
        let total: f64 = (0..seeds)
            .map(|seed| {
                let cfg = SimConfig::new(horizon, 1e-2, seed);
                let traj = simulate_trajectory(&spec, &cfg).unwrap();
                let x = traj.state(traj.steps());
                x.iter().map(|v| v * v).sum::<f64>()
            })
            .sum();
        let mean = total / seeds as f64;
        assert!((mean / (3.0 * horizon) - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn overflow_truncates() {
        let spec = scalar(5.0, 1.0, 1.0, 1.0);
        let mut cfg = SimConfig::new(20.0, 1e-2, 0);
        cfg.overflow_cap = 1e6;
        let traj = simulate_trajectory(&spec, &cfg).unwrap();
        let cut = traj.truncated_at.expect("must truncate");
        assert_eq!(cut, traj.steps());
        assert!(traj.state(cut)[0].abs() > 1e6);
        assert!(traj.state(cut - 1)[0].abs() <= 1e6);
    }

    #[test]
    fn initial_state_is_seeded() {
        assert_eq!(initial_state_normal(3, 4), initial_state_normal(3, 4));
        assert_ne!(initial_state_normal(3, 4), initial_state_normal(4, 4));
    }

    #[test]
    fn csv_marks_oracle_columns() {
        let spec = scalar(-1.0, 1.0, 1.0, 0.0);
        let traj = simulate_trajectory(&spec, &SimConfig::new(0.03, 0.01, 1)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,t,X_1,dU_1,dW_1[oracle],truncated");
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.lines().last().unwrap().ends_with(",,,0"));
    }
}
