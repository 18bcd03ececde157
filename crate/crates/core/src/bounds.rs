//! Closed-form confidence radii, state envelopes and eigenvalue bounds.
//!
//! The order statements carry no explicit constants; where the appendix
//! gives explicit constants (`C_u`, `C_s`, `D_s`, `C_4`) they are used
//! verbatim, otherwise constants are set to one.

use std::f64::consts::E;

use nalgebra::{Cholesky, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_extremes, Regime, SystemAnalysis, STABILITY_TOL};

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")))
    }
}

fn log_det_pd(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Domain(format!("{what} is not positive definite")))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `sqrt(8 log(12^dim det(Vbar)^{1/2} / (delta det(V)^{1/2})))`, through log-determinants.
pub fn self_normalized_radius(
    vbar: &DMatrix<f64>,
    v: &DMatrix<f64>,
    dim: usize,
    delta: f64,
) -> Result<f64> {
    check_delta(delta)?;
    if vbar.shape() != v.shape() || !vbar.is_square() {
        return Err(Error::Dimension("Vbar and V must be square of equal size".into()));
    }
    let (gap, _) = symmetric_extremes(&(vbar - v));
    let (_, top) = symmetric_extremes(vbar);
    if gap < -1e-12 * top.abs().max(1.0) {
        return Err(Error::Domain(format!("Vbar - V is not PSD (eigenvalue {gap:e})")));
    }
    let ld_bar = log_det_pd(vbar, "Vbar")?;
    let ld = log_det_pd(v, "V")?;
    radius_from_log_dets(ld_bar, ld, dim, delta)
}

/// The radius with precomputed `log det Vbar` and `log det V`.
pub fn radius_from_log_dets(log_det_vbar: f64, log_det_v: f64, dim: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let arg = dim as f64 * 12f64.ln() + 0.5 * (log_det_vbar - log_det_v) - delta.ln();
    Ok((8.0 * arg).sqrt())
}

/// The radius for `Vbar = V_T + I` against `V = I`.
pub fn regularized_radius(v_t: &DMatrix<f64>, dim: usize, delta: f64) -> Result<f64> {
    let vbar = v_t + DMatrix::<f64>::identity(v_t.nrows(), v_t.ncols());
    radius_from_log_dets(log_det_pd(&vbar, "V_T + I")?, 0.0, dim, delta)
}

/// Riemann zeta function for real `s > 1` (Euler-Maclaurin summation).
pub fn riemann_zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::Domain(format!("zeta needs s > 1, got {s}")));
    }
    const N: usize = 16;
    // B_2k / (2k)!
    const BERNOULLI_OVER_FACT: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    ];
    let n = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // rising factorial s (s+1) ... (s+2k-2) times N^{-s-2k+1}
    let mut rising = s;
    let mut power = n.powf(-s - 1.0);
    for (k, coef) in BERNOULLI_OVER_FACT.iter().enumerate() {
        if k > 0 {
            let j = 2.0 * k as f64;
            rising *= (s + j - 1.0) * (s + j);
            power /= n * n;
        }
        sum += coef * rising * power;
    }
    Ok(sum)
}

/// Time-uniform boundary for standard Brownian motion: with probability at
/// least `1 - delta` no `t > 0` has `B_t` at or above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LilBoundary {
    prefactor: f64,
    s: f64,
    eta: f64,
    log_const: f64,
}

impl LilBoundary {
    pub fn new(delta: f64, s: f64, eta: f64) -> Result<Self> {
        check_delta(delta)?;
        if !(eta > 1.0) || !(s > 1.0) {
            return Err(Error::Domain(format!("need eta > 1 and s > 1, got eta = {eta}, s = {s}")));
        }
        let log_const = (riemann_zeta(s)? / (delta * eta.ln().powf(s))).ln();
        // smallest radicand is at t <= 1
        if s * eta.ln().ln() + log_const < 0.0 {
            return Err(Error::Domain(format!("boundary undefined for eta = {eta}, s = {s}, delta = {delta}")));
        }
        Ok(LilBoundary {
            prefactor: (eta.powf(0.25) + eta.powf(-0.25)) / 2f64.sqrt(),
            s,
            eta,
            log_const,
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        let tt = t.max(1.0);
        self.prefactor * (tt * (self.s * (self.eta * tt).ln().ln() + self.log_const)).sqrt()
    }
}

pub fn lil_envelope(t: f64, delta: f64, s: f64, eta: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(LilBoundary::new(delta, s, eta)?.at(t))
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `h^2 int_0^t e^{2 lambda u} u^{2l} du`, the quadratic variation of
/// `int_0^t e^{lambda (t-s)} (t-s)^l h dV_s`.
pub fn quadratic_variation_clock(lambda: f64, h: f64, l: u32, t: f64) -> Result<f64> {
    if !(h > 0.0) || !(t >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("clock needs h > 0, t >= 0 (h = {h}, t = {t})")));
    }
    let a = 2.0 * lambda;
    let n = 2 * l;
    let integral = if (a * t).abs() <= 1.0 {
        // sum_m a^m t^{n+m+1} / (m! (n+m+1))
        let mut term = 1.0;
        let mut sum = 0.0;
        for m in 0..60u32 {
            if m > 0 {
                term *= a * t / f64::from(m);
            }
            sum += term / f64::from(n + m + 1);
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum * t.powi(n as i32 + 1)
    } else {
        // integration by parts: e^{at} sum_i (-1)^i n!/(n-i)! t^{n-i} / a^{i+1} - (-1)^n n! / a^{n+1}
        let nf = factorial(n);
        let mut sum = 0.0;
        for i in 0..=n {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * nf / factorial(n - i) * t.powi((n - i) as i32) / a.powi(i as i32 + 1);
        }
        let sign_n = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        (a * t).exp() * sum - sign_n * nf / a.powi(n as i32 + 1)
    };
    Ok(h * h * integral)
}

/// `lim_{t -> inf}` of the clock: finite only for `lambda < 0`.
pub fn clock_limit(lambda: f64, h: f64, l: u32) -> f64 {
    if lambda < 0.0 {
        h * h * factorial(2 * l) / (-2.0 * lambda).powi(2 * l as i32 + 1)
    } else {
        f64::INFINITY
    }
}

fn check_regime(regime: Regime, lambda1: f64) -> Result<()> {
    let implied = Regime::from_lambda1(lambda1, STABILITY_TOL);
    if implied == regime {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda_1 = {lambda1} is {implied}, not {regime}")))
    }
}

/// `l^0 = max(lim alpha, 1)` for a stable clock.
pub fn stable_clock_level(lambda: f64, h: f64, l: u32) -> f64 {
    clock_limit(lambda, h, l).max(1.0)
}

/// `sqrt(2 l0 (2 log(1 + log l0) + log(4/delta)))`.
pub fn stable_envelope_constant(lambda: f64, h: f64, l: u32, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(lambda < 0.0) {
        return Err(Error::Domain(format!("stable envelope needs lambda < 0, got {lambda}")));
    }
    let l0 = stable_clock_level(lambda, h, l);
    Ok((2.0 * l0 * (2.0 * (1.0 + l0.ln()).ln() + (4.0 / delta).ln())).sqrt())
}

/// High-probability envelope for `|int_0^t e^{lambda (t-s)} h dV_s|`, uniform in `t`.
pub fn state_envelope(regime: Regime, lambda1: f64, h: f64, t: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_regime(regime, lambda1)?;
    if !(h > 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!("envelope needs h > 0 and t >= 0 (h = {h}, t = {t})")));
    }
    let log4d = (4.0 / delta).ln();
    match regime {
        Regime::Unstable => {
            let l = lambda1;
            let inner = (2.0 * l * t + 1.0 + (h * h / (2.0 * l)).ln()).max(1.0);
            Ok(h * (2.0 / l).sqrt() * (l * t).exp() * (2.0 * inner.ln() + log4d).sqrt())
        }
        Regime::MarginallyStable => {
            if t < 1.0 {
                return Err(Error::Domain(format!("marginal envelope needs t >= 1, got {t}")));
            }
            let inner = (t.ln() + 2.0 * h.ln() + 1.0).max(1.0);
            Ok(2.0 * h * t.sqrt() * (2.0 * inner.ln() + log4d).sqrt())
        }
        Regime::Stable => stable_envelope_constant(lambda1, h, 0, delta),
    }
}

/// Shared inputs of the eigenvalue bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsUsed {
    pub beta: f64,
    pub p_star: f64,
    pub c: f64,
    pub l_star: usize,
    pub lambda1: f64,
    pub norm_c2: f64,
    pub norm_l2: f64,
    pub norm_l_inf: f64,
    pub norm_a2: f64,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub kappa: f64,
}

impl ConstantsUsed {
    pub fn from_analysis(analysis: &SystemAnalysis) -> Self {
        let k = &analysis.constants;
        ConstantsUsed {
            beta: k.beta,
            p_star: k.p_star,
            c: k.c,
            l_star: analysis.largest_block(),
            lambda1: analysis.lambda1(),
            norm_c2: k.norm_c2,
            norm_l2: k.norm_l2,
            norm_l_inf: k.norm_l_inf,
            norm_a2: k.norm_a2,
            p: k.p,
            q: k.q,
            r: k.r,
            kappa: k.kappa,
        }
    }

    fn qr(&self) -> f64 {
        (self.q + self.r) as f64
    }

    /// `beta^2 p e^2 kappa^2`.
    fn growth_prefactor(&self) -> f64 {
        self.beta.powi(2) * self.p as f64 * E * E * self.kappa.powi(2)
    }

    /// `log(4 p l* (q + r) / delta)`.
    fn union_log(&self, delta: f64) -> f64 {
        (4.0 * self.p as f64 * self.l_star as f64 * self.qr() / delta).ln()
    }
}

/// High-probability bound on `||X_t||_2`, uniform over `t >= 1` once the
/// initial condition has been absorbed.
pub fn state_norm_bound(regime: Regime, consts: &ConstantsUsed, t: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_regime(regime, consts.lambda1)?;
    if !(t >= 1.0) {
        return Err(Error::Domain(format!("state bound needs t >= 1, got {t}")));
    }
    let l1 = consts.lambda1;
    let ls = consts.l_star as i32;
    let front = consts.beta * (consts.p as f64).sqrt() * E * consts.kappa * consts.qr();
    let union = consts.union_log(delta);
    Ok(match regime {
        Regime::Unstable => {
            let inner = (2.0 * l1 * t + 1.0 + (consts.p_star.powi(2) / (2.0 * l1)).ln()).max(1.0);
            2.0 * (2.0 / l1).sqrt() * front * (l1 * t).exp() * t.powi(ls - 1) * (2.0 * inner.ln() + union).sqrt()
        }
        Regime::MarginallyStable => {
            let inner = (t.ln() + 2.0 * consts.p_star.ln() + 1.0).max(1.0);
            3.0 * front * t.powf(f64::from(ls) - 0.5) * (2.0 * inner.ln() + union).sqrt()
        }
        Regime::Stable => {
            let l0 = stable_clock_level(l1, consts.p_star, consts.l_star as u32 - 1);
            2.0 * front * (2.0 * l0 * (2.0 * (1.0 + l0.ln()).ln() + union)).sqrt()
        }
    })
}

/// `(beta / ||L||_inf) ||X0||_inf sqrt(p) e t^{l*-1} e^{lambda_1 t}`, which
/// dominates `||e^{A t} X0||_2`.
pub fn initial_state_bound(consts: &ConstantsUsed, x0_inf: f64, t: f64) -> f64 {
    consts.beta / consts.norm_l_inf * x0_inf * (consts.p as f64).sqrt() * E
        * t.powi(consts.l_star as i32 - 1)
        * (consts.lambda1 * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovmaxConstant {
    #[serde(rename = "C_u")]
    Cu,
    #[serde(rename = "C_s")]
    Cs,
    #[serde(rename = "D_s")]
    Ds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovmaxBound {
    pub value: f64,
    pub constant: f64,
    pub constant_name: CovmaxConstant,
}

/// Upper bound on `lambda_max(V_T)`.
pub fn covmax_bound(regime: Regime, consts: &ConstantsUsed, horizon: f64, delta: f64) -> Result<CovmaxBound> {
    check_delta(delta)?;
    check_regime(regime, consts.lambda1)?;
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let t = horizon;
    let l1 = consts.lambda1;
    let ls = consts.l_star as i32;
    let k = consts.growth_prefactor();
    let union = consts.union_log(delta);
    let (constant, value, name) = match regime {
        Regime::Unstable => {
            let inner = (2.0 * l1 * t + 1.0 + (consts.p_star.powi(2) / (2.0 * l1)).ln()).max(1.0);
            let cu = 8.0 / l1 * k * consts.qr() * (2.0 * inner.ln() + union);
            (cu, cu * t.powi(2 * ls - 1) * (2.0 * l1 * t).exp(), CovmaxConstant::Cu)
        }
        Regime::MarginallyStable => {
            let inner = (t.ln() + 2.0 * consts.p_star.ln() + 1.0).max(1.0);
            let cs = 9.0 * k * consts.qr().powi(2) * (2.0 * inner.ln() + union);
            (cs, cs * t.powi(2 * ls), CovmaxConstant::Cs)
        }
        Regime::Stable => {
            let l0 = stable_clock_level(l1, consts.p_star, consts.l_star as u32 - 1);
            let ds = 4.0 * k * consts.qr().powi(2) * (2.0 * l0 * (2.0 * (1.0 + l0.ln()).ln() + union));
            (ds, ds * t, CovmaxConstant::Ds)
        }
    };
    Ok(CovmaxBound {
        value,
        constant,
        constant_name: name,
    })
}

/// `C_4 = min{1/6, 1/(6 ||A||), c / (24 ||L|| sqrt(lambda_1 p))^2}`, the last
/// term only for unstable `A`.
pub fn covmin_constant(consts: &ConstantsUsed) -> f64 {
    let mut c4 = (1.0f64 / 6.0).min(1.0 / (6.0 * consts.norm_a2));
    if consts.lambda1 > STABILITY_TOL {
        let denom = 24.0 * consts.norm_l2 * (consts.lambda1 * consts.p as f64).sqrt();
        c4 = c4.min(consts.c / (denom * denom));
    }
    c4
}

/// Lower bound `C_4 T c kappa^2` on `lambda_min(V_T)`.
pub fn covmin_bound(consts: &ConstantsUsed, horizon: f64) -> Result<f64> {
    if !(consts.c > 0.0) {
        return Err(Error::Assumption1Violation { c: consts.c });
    }
    Ok(covmin_constant(consts) * horizon * consts.c * consts.kappa.powi(2))
}

/// Squared-error rate of the estimate with unit constants.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_rate(
    regime: Regime,
    p: usize,
    norm_c2: f64,
    c: f64,
    kappa: f64,
    horizon: f64,
    delta: f64,
    l_star: usize,
) -> Result<f64> {
    check_delta(delta)?;
    if !(c > 0.0) {
        return Err(Error::Assumption1Violation { c });
    }
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let base = p as f64 * norm_c2 * norm_c2 / (c * horizon * kappa * kappa);
    Ok(match regime {
        Regime::Stable => base * (horizon.ln() - delta.ln()),
        Regime::MarginallyStable => l_star as f64 * base * (horizon.ln() - delta.ln()),
        Regime::Unstable => base * (horizon - delta.ln()),
    })
}

/// `||V^{-1/2} + V^{-1}||_2 * ||Vbar^{-1/2} S||_2 * ||C||_2`, which dominates
/// `||A_hat - A||_2` whenever the estimate uses `V^{-1}`.
pub fn error_decomposition_bound(min_eig_v: f64, self_normalized: f64, norm_c2: f64) -> f64 {
    (min_eig_v.powf(-0.5) + 1.0 / min_eig_v) * self_normalized * norm_c2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub horizon: f64,
    pub delta: f64,
    pub regime: Regime,
    /// Radius for the concatenated `q + r` dimensional noise with `Vbar = V_T + I`.
    pub y_radius: f64,
    pub y_radius_dim: usize,
    pub covmax_bound: f64,
    pub covmax_constant: f64,
    pub covmax_constant_name: CovmaxConstant,
    pub covmin_bound: f64,
    pub c4: f64,
    pub theorem1_bound: f64,
    pub constants_used: ConstantsUsed,
}

impl BoundReport {
    pub fn new(analysis: &SystemAnalysis, v_t: &DMatrix<f64>, horizon: f64, delta: f64) -> Result<Self> {
        let consts = ConstantsUsed::from_analysis(analysis);
        let regime = analysis.regime();
        let dim = consts.q + consts.r;
        let y_radius = regularized_radius(v_t, dim, delta)?;
        let covmax = covmax_bound(regime, &consts, horizon, delta)?;
        Ok(BoundReport {
            horizon,
            delta,
            regime,
            y_radius,
            y_radius_dim: dim,
            covmax_bound: covmax.value,
            covmax_constant: covmax.constant,
            covmax_constant_name: covmax.constant_name,
            covmin_bound: covmin_bound(&consts, horizon)?,
            c4: covmin_constant(&consts),
            theorem1_bound: theorem1_rate(
                regime,
                consts.p,
                consts.norm_c2,
                consts.c,
                consts.kappa,
                horizon,
                delta,
                consts.l_star,
            )?,
            constants_used: consts,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::reactor_system;
    use approx::assert_relative_eq;

    /// Composite Simpson with many panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn zeta_known_values() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(riemann_zeta(2.0).unwrap(), pi * pi / 6.0, max_relative = 1e-14);
        assert_relative_eq!(riemann_zeta(4.0).unwrap(), pi.powi(4) / 90.0, max_relative = 1e-14);
        assert_relative_eq!(riemann_zeta(1.5).unwrap(), 2.612_375_348_685_488, max_relative = 1e-13);
        assert!(riemann_zeta(1.0).is_err());
    }

    #[test]
    fn radius_with_equal_matrices() {
        let v = DMatrix::<f64>::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        for (dim, delta) in [(1, 0.1), (2, 1.0), (5, 0.01)] {
            let r = self_normalized_radius(&v, &v, dim, delta).unwrap();
            let expect = (8.0 * (12f64.powi(dim as i32) / delta).ln()).sqrt();
            assert_relative_eq!(r, expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn radius_log_det_against_naive_determinant() {
        let v = DMatrix::<f64>::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let vbar = &v * 3.0 + DMatrix::identity(3, 3);
        let naive = (8.0
            * (2.0 * 12f64.ln() + 0.5 * vbar.determinant().ln() - 0.5 * v.determinant().ln() - 0.1f64.ln()))
        .sqrt();
        assert_relative_eq!(self_normalized_radius(&vbar, &v, 2, 0.1).unwrap(), naive, max_relative = 1e-12);
    }

    #[test]
    fn radius_domain_checks() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert!(self_normalized_radius(&i, &(&i * 2.0), 2, 0.1).is_err());
        assert!(self_normalized_radius(&i, &i, 2, 0.0).is_err());
        assert!(self_normalized_radius(&i, &i, 2, 1.5).is_err());
    }

    #[test]
    fn radius_and_lil_decrease_in_delta() {
        let i = DMatrix::<f64>::identity(2, 2);
        let mut prev_r = f64::INFINITY;
        let mut prev_l = f64::INFINITY;
        for d in [0.01, 0.05, 0.1, 0.5, 0.9] {
            let r = self_normalized_radius(&(&i * 5.0), &i, 2, d).unwrap();
            let l = lil_envelope(10.0, d, 2.0, E).unwrap();
            assert!(r < prev_r && l < prev_l);
            prev_r = r;
            prev_l = l;
        }
    }

    #[test]
    fn lil_is_flat_before_one_and_grows_after() {
        let a = lil_envelope(0.2, 0.1, 2.0, E).unwrap();
        let b = lil_envelope(1.0, 0.1, 2.0, E).unwrap();
        assert_eq!(a, b);
        let c = lil_envelope(50.0, 0.1, 2.0, E).unwrap();
        assert!(c > b);
        assert!(lil_envelope(1.0, 0.1, 2.0, 1.0).is_err());
    }

    #[test]
    fn clock_spec_examples() {
        assert_eq!(quadratic_variation_clock(-1.0, 1.0, 0, 0.0).unwrap(), 0.0);
        let v = quadratic_variation_clock(-1.0, 1.0, 0, 1.0).unwrap();
        assert!((v - 0.4323).abs() < 1e-4, "{v}");
    }

    #[test]
    fn clock_matches_quadrature() {
        for &lambda in &[-1.3, -0.2, 0.0, 1e-3, 0.4, 0.9] {
            for l in 0..3u32 {
                for &t in &[0.3, 2.0, 7.5] {
                    let h = 0.7;
                    let exact = h * h * simpson(|u| (2.0 * lambda * u).exp() * u.powi(2 * l as i32), 0.0, t);
                    let got = quadratic_variation_clock(lambda, h, l, t).unwrap();
                    assert_relative_eq!(got, exact, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn clock_tends_to_limit() {
        for l in 0..3u32 {
            let lim = clock_limit(-0.5, 2.0, l);
            let far = quadratic_variation_clock(-0.5, 2.0, l, 200.0).unwrap();
            assert_relative_eq!(far, lim, max_relative = 1e-12);
        }
        assert!(clock_limit(0.0, 1.0, 0).is_infinite());
    }

    #[test]
    fn envelope_regime_mismatch_rejected() {
        assert!(state_envelope(Regime::Unstable, -0.1, 1.0, 2.0, 0.1).is_err());
        assert!(state_envelope(Regime::Stable, 0.0, 1.0, 2.0, 0.1).is_err());
        assert!(state_envelope(Regime::MarginallyStable, 0.0, 1.0, 0.5, 0.1).is_err());
    }

    #[test]
    fn envelope_shapes() {
        let s1 = state_envelope(Regime::Stable, -0.5, 1.0, 1.0, 0.1).unwrap();
        let s2 = state_envelope(Regime::Stable, -0.5, 1.0, 100.0, 0.1).unwrap();
        assert_eq!(s1, s2);
        let m1 = state_envelope(Regime::MarginallyStable, 0.0, 1.0, 4.0, 0.1).unwrap();
        let m2 = state_envelope(Regime::MarginallyStable, 0.0, 1.0, 16.0, 0.1).unwrap();
        assert!(m2 > 2.0 * m1);
        let u1 = state_envelope(Regime::Unstable, 0.5, 1.0, 10.0, 0.1).unwrap();
        let u2 = state_envelope(Regime::Unstable, 0.5, 1.0, 12.0, 0.1).unwrap();
        assert!(u2 / u1 > 1.0f64.exp());
    }

    #[test]
    fn covmax_orders() {
        let stable = reactor_system(5.0, 1.0, 0).unwrap().analysis().unwrap();
        let marginal = reactor_system(10.0, 2.0, 0).unwrap().analysis().unwrap();
        let unstable = reactor_system(15.0, 5.0, 0).unwrap().analysis().unwrap();
        let c = ConstantsUsed::from_analysis(&stable);
        let a = covmax_bound(Regime::Stable, &c, 10.0, 0.1).unwrap();
        let b = covmax_bound(Regime::Stable, &c, 20.0, 0.1).unwrap();
        assert_eq!(a.constant_name, CovmaxConstant::Ds);
        assert_relative_eq!(b.value / a.value, 2.0, max_relative = 1e-12);
        let c = ConstantsUsed::from_analysis(&marginal);
        let a = covmax_bound(Regime::MarginallyStable, &c, 10.0, 0.1).unwrap();
        assert_eq!(a.constant_name, CovmaxConstant::Cs);
        assert!(a.value.is_finite() && a.value > 0.0);
        let c = ConstantsUsed::from_analysis(&unstable);
        let a = covmax_bound(Regime::Unstable, &c, 10.0, 0.1).unwrap();
        let b = covmax_bound(Regime::Unstable, &c, 20.0, 0.1).unwrap();
        assert_eq!(a.constant_name, CovmaxConstant::Cu);
        assert!(b.value / a.value > (2.0 * c.lambda1 * 10.0).exp());
    }

    #[test]
    fn state_norm_bound_shapes() {
        let stable = ConstantsUsed::from_analysis(&reactor_system(5.0, 1.0, 0).unwrap().analysis().unwrap());
        let a = state_norm_bound(Regime::Stable, &stable, 1.0, 0.1).unwrap();
        let b = state_norm_bound(Regime::Stable, &stable, 40.0, 0.1).unwrap();
        assert_eq!(a, b);
        let covmax = covmax_bound(Regime::Stable, &stable, 7.0, 0.1).unwrap();
        assert_relative_eq!(b * b * 7.0, covmax.value, max_relative = 1e-12);
        let unstable = ConstantsUsed::from_analysis(&reactor_system(15.0, 5.0, 0).unwrap().analysis().unwrap());
        let x = state_norm_bound(Regime::Unstable, &unstable, 20.0, 0.1).unwrap();
        let cov = covmax_bound(Regime::Unstable, &unstable, 20.0, 0.1).unwrap();
        // covmax = x^2 T / (q + r) in the unstable case
        assert_relative_eq!(x * x * 20.0 / 6.0, cov.value, max_relative = 1e-12);
        assert!(state_norm_bound(Regime::Unstable, &unstable, 0.5, 0.1).is_err());
        let x0 = initial_state_bound(&stable, 1.0, 30.0);
        assert!(x0 < initial_state_bound(&stable, 1.0, 1.0));
    }

    #[test]
    fn covmin_constant_terms() {
        let unstable = reactor_system(15.0, 1.0, 0).unwrap().analysis().unwrap();
        let c = ConstantsUsed::from_analysis(&unstable);
        let third = c.c / (24.0 * c.norm_l2 * (c.lambda1 * 3.0).sqrt()).powi(2);
        let expect = (1.0f64 / 6.0).min(1.0 / (6.0 * c.norm_a2)).min(third);
        assert_eq!(covmin_constant(&c), expect);
        let b = covmin_bound(&c, 50.0).unwrap();
        assert_relative_eq!(b, expect * 50.0 * c.c, max_relative = 1e-15);
    }

    fn hand_constants() -> ConstantsUsed {
        ConstantsUsed {
            beta: 2.0,
            p_star: 3.0,
            c: 0.5,
            l_star: 2,
            lambda1: 0.25,
            norm_c2: 1.0,
            norm_l2: 1.5,
            norm_l_inf: 2.0,
            norm_a2: 0.8,
            p: 2,
            q: 1,
            r: 2,
            kappa: 1.5,
        }
    }

    #[test]
    fn cu_hand_evaluation() {
        // 8/0.25 * 4 * 2 * e^2 * 2.25 * 3 * [2 log(2*0.25*4 + 1 + log(9/0.5)) + log(4*2*2*3/0.1)]
        let inner = 2.0f64 + 1.0 + 18f64.ln();
        let bracket = 2.0 * inner.ln() + 480f64.ln();
        let expect = 32.0 * 4.0 * 2.0 * E * E * 2.25 * 3.0 * bracket;
        let got = covmax_bound(Regime::Unstable, &hand_constants(), 4.0, 0.1).unwrap();
        assert_relative_eq!(got.constant, expect, max_relative = 1e-14);
        assert_relative_eq!(got.value, expect * 4.0f64.powi(3) * 2f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn covmin_first_term_and_kappa_scaling() {
        let mut c = hand_constants();
        c.lambda1 = -0.2;
        assert_eq!(covmin_constant(&c), 1.0 / 6.0);
        let one = covmin_bound(&c, 10.0).unwrap();
        c.kappa *= 2.0;
        assert_relative_eq!(covmin_bound(&c, 10.0).unwrap(), 4.0 * one, max_relative = 1e-15);
        c.c = 0.0;
        assert!(covmin_bound(&c, 10.0).is_err());
    }

    #[test]
    fn unstable_rate_with_sqrt_t_amplification_is_bounded() {
        // kappa = sqrt(T) gives T * rate = p ||C||^2 (1 - log(delta) / T) / c
        let limit = 3.0 * 0.04 / 0.04;
        for t in [10.0f64, 100.0, 1e4, 1e6] {
            let scaled = t * theorem1_rate(Regime::Unstable, 3, 0.2, 0.04, t.sqrt(), t, 0.1, 1).unwrap();
            assert_relative_eq!(scaled, limit * (1.0 - 0.1f64.ln() / t), max_relative = 1e-12);
        }
        let stable = theorem1_rate(Regime::Stable, 3, 0.2, 0.04, 1.0, 1e6, 0.1, 1).unwrap();
        assert!(stable < 1e-4);
        let marginal = theorem1_rate(Regime::MarginallyStable, 3, 0.2, 0.04, 1.0, 50.0, 0.1, 1).unwrap();
        assert_eq!(marginal, theorem1_rate(Regime::Stable, 3, 0.2, 0.04, 1.0, 50.0, 0.1, 1).unwrap());
    }

    #[test]
    fn theorem1_rates() {
        let s = theorem1_rate(Regime::Stable, 3, 0.2, 0.04, 1.0, 100.0, 0.1, 1).unwrap();
        assert_relative_eq!(s, 3.0 * 0.04 * (100f64.ln() - 0.1f64.ln()) / (0.04 * 100.0), max_relative = 1e-14);
        let m = theorem1_rate(Regime::MarginallyStable, 3, 0.2, 0.04, 1.0, 100.0, 0.1, 2).unwrap();
        assert_relative_eq!(m, 2.0 * s, max_relative = 1e-14);
        let u = theorem1_rate(Regime::Unstable, 3, 0.2, 0.04, 2.0, 100.0, 0.1, 1).unwrap();
        assert_relative_eq!(u, 3.0 * 0.04 * (100.0 - 0.1f64.ln()) / (0.04 * 100.0 * 4.0), max_relative = 1e-14);
    }

    #[test]
    fn report_json_fields() {
        let analysis = reactor_system(5.0, 1.0, 0).unwrap().analysis().unwrap();
        let v = DMatrix::<f64>::identity(3, 3) * 4.0;
        let report = BoundReport::new(&analysis, &v, 50.0, 0.1).unwrap();
        assert_eq!(report.y_radius_dim, 6);
        let json = report.to_json();
        for key in ["y_radius", "covmax_bound", "covmin_bound", "theorem1_bound", "constants_used", "\"D_s\""] {
            assert!(json.contains(key), "{key}");
        }
        assert!(report.y_radius.is_finite() && report.covmin_bound > 0.0);
    }
}
