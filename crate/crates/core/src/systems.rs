//! Reference systems used by the experiments.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::sim::{initial_state_normal, SystemSpec};

/// Drift of the three-state reactor model with feedback gain `z`.
pub fn reactor_matrix(z: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, -z, 2.0, -2.0, 0.0, 0.0, 3.0, -3.0])
}

/// Reactor model with `B = C = I/5` and `X0 ~ N(0, I)` drawn from `seed`.
pub fn reactor_system(z: f64, kappa: f64, seed: u64) -> Result<SystemSpec> {
    let b = DMatrix::<f64>::identity(3, 3) * 0.2;
    SystemSpec::new(reactor_matrix(z), b.clone(), b, initial_state_normal(seed, 3), kappa)
}

/// Scalar `dX = a X dt + kappa dU + dW` started at the origin.
pub fn scalar_system(a: f64, kappa: f64) -> Result<SystemSpec> {
    let one = DMatrix::from_element(1, 1, 1.0);
    SystemSpec::new(
        DMatrix::from_element(1, 1, a),
        one.clone(),
        one,
        DVector::zeros(1),
        kappa,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigen_real_parts, largest_jordan_block, jordan_cluster_tolerance, Regime, SquareMatrix};
    use crate::sim::{simulate_with, Integrator, SimConfig};

    /// Largest real root of `s^3 + 6 s^2 + 11 s + 6 + 6 z` by bisection on the
    /// real cubic and the quadratic deflation for the complex pair.
    fn lambda1_oracle(z: f64) -> f64 {
        let k = 6.0 + 6.0 * z;
        let f = |s: f64| ((s + 6.0) * s + 11.0) * s + k;
        // the real root lies below -3 for z > 0
        let (mut lo, mut hi) = (-20.0, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        // s^3 + 6 s^2 + 11 s + k = (s - r)(s^2 + b s + c), b = 6 + r
        let b = 6.0 + r;
        let re_pair = -b / 2.0;
        re_pair.max(r)
    }

    #[test]
    fn reactor_lambda1_matches_characteristic_polynomial() {
        for z in [5.0, 10.0, 15.0] {
            let re = eigen_real_parts(&SquareMatrix::new(reactor_matrix(z)).unwrap()).unwrap();
            assert!((re[0] - lambda1_oracle(z)).abs() < 1e-10, "z = {z}");
        }
    }

    #[test]
    fn reactor_regimes() {
        let cases = [
            (5.0, -0.3928, Regime::Stable),
            (10.0, 0.0, Regime::MarginallyStable),
            (15.0, 0.2779, Regime::Unstable),
        ];
        for (z, lambda1, regime) in cases {
            let spec = reactor_system(z, 1.0, 0).unwrap();
            let analysis = spec.analysis().unwrap();
            assert!((analysis.lambda1() - lambda1).abs() < 1e-3, "z = {z}: {}", analysis.lambda1());
            assert_eq!(analysis.regime(), regime);
        }
        let marginal = reactor_system(10.0, 1.0, 0).unwrap().analysis().unwrap();
        assert!(marginal.lambda1().abs() < 1e-6);
    }

    #[test]
    fn reactor_eigenvalues_are_distinct() {
        let m = SquareMatrix::new(reactor_matrix(5.0)).unwrap();
        let eigs = crate::linalg::eigenvalues(&m).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert!((eigs[i] - eigs[j]).norm() > 1e-3);
            }
        }
        let info = largest_jordan_block(&m, jordan_cluster_tolerance(&m)).unwrap();
        assert_eq!(info.size, 1);
        assert!(!info.warning);
    }

    #[test]
    fn unstable_growth_rate() {
        let spec = reactor_system(15.0, 5.0, 2).unwrap();
        let cfg = SimConfig::new(50.0, 1e-3, 2).with_integrator(Integrator::ExactLti);
        let mut pts = Vec::new();
        simulate_with(&spec, &cfg, |s| {
            let k = s.k + 1;
            if k % 1000 == 0 && k >= 20_000 {
                let n = s.x_next.iter().map(|v| v * v).sum::<f64>().sqrt();
                pts.push((k as f64 * 1e-3, n.ln()));
            }
        })
        .unwrap();
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
        assert!((slope / 0.2779 - 1.0).abs() < 0.2, "slope {slope}");
    }
}
