//! Dense small-matrix numerics: matrix exponential, spectra, Jordan structure
//! and the structural constants that feed the finite-time bounds.

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance on `lambda_1` for the stability trichotomy.
pub const STABILITY_TOL: f64 = 1e-9;

/// Eigenvalues closer than `JORDAN_CLUSTER_REL * ||M||_2` are treated as one.
pub const JORDAN_CLUSTER_REL: f64 = 1e-6;

const SCHUR_MAX_ITER: usize = 10_000;

/// A finite square matrix of dimension at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix(DMatrix<f64>);

impl SquareMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvalidMatrix(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(SquareMatrix(m))
    }

    pub fn from_row_slice(p: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != p * p {
            return Err(Error::Dimension(format!(
                "{} entries for a {p}x{p} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(p, p, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for SquareMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl AsRef<DMatrix<f64>> for SquareMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Stable,
    MarginallyStable,
    Unstable,
}

impl Regime {
    pub fn from_lambda1(lambda1: f64, tol: f64) -> Regime {
        if lambda1 < -tol {
            Regime::Stable
        } else if lambda1 > tol {
            Regime::Unstable
        } else {
            Regime::MarginallyStable
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Stable => "stable",
            Regime::MarginallyStable => "marginally-stable",
            Regime::Unstable => "unstable",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSummary {
    /// Real parts of all eigenvalues, descending, repeated by multiplicity.
    pub real_parts: Vec<f64>,
    pub regime: Regime,
    pub largest_block: usize,
    /// Set when the eigenvalue clustering changes under a 10x change of tolerance.
    pub jordan_warning: bool,
}

impl SpectrumSummary {
    pub fn lambda1(&self) -> f64 {
        self.real_parts[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralConstants {
    /// `lambda_min(B B^T)`.
    pub c: f64,
    pub beta: f64,
    pub p_star: f64,
    pub norm_a2: f64,
    pub norm_l2: f64,
    pub norm_l_inf: f64,
    pub norm_c2: f64,
    /// `||P||_inf ||P^{-1}||_inf` of the (generalized) eigenvector basis.
    pub cond_p: f64,
    pub kappa: f64,
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

/// Spectrum and structural constants of one system, everything the bound
/// evaluators consume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemAnalysis {
    pub spectrum: SpectrumSummary,
    pub constants: StructuralConstants,
}

impl SystemAnalysis {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, kappa: f64) -> Result<Self> {
        let square = SquareMatrix::new(a.clone())?;
        let real_parts = eigen_real_parts(&square)?;
        let regime = Regime::from_lambda1(real_parts[0], STABILITY_TOL);
        let jordan = largest_jordan_block(&square, jordan_cluster_tolerance(&square))?;
        let constants = structural_constants(a, b, c, kappa)?;
        Ok(SystemAnalysis {
            spectrum: SpectrumSummary {
                real_parts,
                regime,
                largest_block: jordan.size,
                jordan_warning: jordan.warning,
            },
            constants,
        })
    }

    pub fn lambda1(&self) -> f64 {
        self.spectrum.lambda1()
    }

    pub fn regime(&self) -> Regime {
        self.spectrum.regime
    }

    pub fn largest_block(&self) -> usize {
        self.spectrum.largest_block
    }
}

// ---------------------------------------------------------------------------
// Matrix exponential: Pade approximants with scaling and squaring.
// ---------------------------------------------------------------------------

#[allow(clippy::excessive_precision)]
const PADE_THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

fn pade_coefficients(order: usize) -> &'static [f64] {
    match order {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!("unsupported Pade order {order}"),
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `(V - U) X = V + U` for the [m/m] approximant given the odd part `u`
/// and even part `v`.
fn pade_quotient(u: DMatrix<f64>, v: DMatrix<f64>, norm: f64) -> Result<DMatrix<f64>> {
    let q = &v - &u;
    let p = v + u;
    q.lu()
        .solve(&p)
        .ok_or(Error::ExpOverflow { norm })
}

fn pade_low(a: &DMatrix<f64>, order: usize, norm: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let b = pade_coefficients(order);
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let mut powers = vec![ident.clone(), a2.clone()];
    while powers.len() <= order / 2 {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut odd = DMatrix::<f64>::zeros(n, n);
    let mut even = DMatrix::<f64>::zeros(n, n);
    for (k, pw) in powers.iter().enumerate() {
        odd += pw * b[2 * k + 1];
        even += pw * b[2 * k];
    }
    pade_quotient(a * odd, even, norm)
}

fn pade_13(a: &DMatrix<f64>, norm: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let b = pade_coefficients(13);
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = a * inner_u;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    pade_quotient(u, v, norm)
}

/// `e^{M t}` by scaling and squaring with a degree-13 Pade approximant.
///
/// Overflow (any non-finite entry in the result) is reported as
/// [`Error::ExpOverflow`] instead of returning infinities.
pub fn matrix_exponential(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("exponential time must be finite, got {t}")));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("matrix exponential of a non-square matrix".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let a = m * t;
    let norm = one_norm(&a);
    if !norm.is_finite() {
        return Err(Error::ExpOverflow { norm });
    }

    let result = if let Some(&(order, _)) = PADE_THETA.iter().find(|(_, theta)| norm <= *theta) {
        pade_low(&a, order, norm)?
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        let scaled = &a * 2f64.powi(-s);
        let mut r = pade_13(&scaled, norm)?;
        for _ in 0..s {
            r = &r * &r;
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::ExpOverflow { norm });
            }
        }
        r
    };
    if result.iter().any(|x| !x.is_finite()) {
        return Err(Error::ExpOverflow { norm });
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

/// All eigenvalues of `m` (complex, unordered).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(
        Error::EigenNonConvergence {
            iterations: SCHUR_MAX_ITER,
        },
    )?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Real parts of the eigenvalues of `m`, sorted in descending order.
pub fn eigen_real_parts(m: &SquareMatrix) -> Result<Vec<f64>> {
    let mut re: Vec<f64> = eigenvalues(m)?.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    Ok(re)
}

pub fn classify_stability(m: &SquareMatrix, tol: f64) -> Result<Regime> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("stability tolerance must be positive, got {tol}")));
    }
    let re = eigen_real_parts(m)?;
    Ok(Regime::from_lambda1(re[0], tol))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn inf_norm_complex(m: &DMatrix<Complex64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

// ---------------------------------------------------------------------------
// Jordan structure
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct EigenCluster {
    pub center: Complex64,
    pub multiplicity: usize,
    pub largest_block: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JordanInfo {
    pub size: usize,
    pub warning: bool,
    pub clusters: Vec<EigenCluster>,
}

pub fn jordan_cluster_tolerance(m: &DMatrix<f64>) -> f64 {
    (JORDAN_CLUSTER_REL * spectral_norm(m)).max(1e-12)
}

/// Single-linkage clusters of eigenvalues within `tol` of each other.
fn cluster_eigenvalues(eigs: &[Complex64], tol: f64) -> Vec<Vec<usize>> {
    let n = eigs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (eigs[i] - eigs[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_index: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_index[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_index[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

fn numerical_rank(m: &DMatrix<Complex64>, tol: f64) -> usize {
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > tol)
        .count()
}

fn cluster_center(eigs: &[Complex64], members: &[usize]) -> Complex64 {
    members.iter().map(|&i| eigs[i]).sum::<Complex64>() / members.len() as f64
}

/// Size of the largest Jordan block, by ranks of powers of `M - mu I` per
/// eigenvalue cluster. Clustering uses the absolute tolerance `tol`.
pub fn largest_jordan_block(m: &SquareMatrix, tol: f64) -> Result<JordanInfo> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("clustering tolerance must be positive, got {tol}")));
    }
    let p = m.dim();
    let eigs = eigenvalues(m)?;
    let groups = cluster_eigenvalues(&eigs, tol);
    let warning = cluster_eigenvalues(&eigs, tol * 10.0).len() != groups.len()
        || cluster_eigenvalues(&eigs, tol / 10.0).len() != groups.len();

    let scale = spectral_norm(m).max(1.0);
    let mc = to_complex(m);
    let ident = DMatrix::<Complex64>::identity(p, p);
    let mut clusters = Vec::with_capacity(groups.len());
    for members in &groups {
        let mult = members.len();
        let center = cluster_center(&eigs, members);
        let shifted = &mc - &ident * center;
        let floor = p - mult;
        let mut power = shifted.clone();
        let mut block = mult;
        for k in 1..=mult {
            let rank_tol = 1e-9 * (p as f64) * scale.powi(k as i32);
            if numerical_rank(&power, rank_tol) <= floor {
                block = k;
                break;
            }
            power = &power * &shifted;
        }
        clusters.push(EigenCluster {
            center,
            multiplicity: mult,
            largest_block: block,
        });
    }
    let size = clusters.iter().map(|c| c.largest_block).max().unwrap_or(1);
    Ok(JordanInfo {
        size,
        warning,
        clusters,
    })
}

/// Basis of generalized eigenvectors, one block of columns per eigenvalue
/// cluster: `Q` with `M = Q J Q^{-1}`, i.e. `P = Q^{-1}` in `M = P^{-1} J P`.
fn generalized_eigenbasis(m: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    let p = m.nrows();
    let eigs = eigenvalues(m)?;
    let groups = cluster_eigenvalues(&eigs, jordan_cluster_tolerance(m));
    let mc = to_complex(m);
    let ident = DMatrix::<Complex64>::identity(p, p);
    let mut q = DMatrix::<Complex64>::zeros(p, p);
    let mut col = 0;
    for members in &groups {
        let mult = members.len();
        let center = cluster_center(&eigs, members);
        let shifted = &mc - &ident * center;
        let mut power = shifted.clone();
        for _ in 1..mult {
            power = &power * &shifted;
        }
        let svd = SVD::new(power, false, true);
        let v_t = svd
            .v_t
            .ok_or(Error::EigenNonConvergence { iterations: 0 })?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for &idx in order.iter().take(mult) {
            let v = v_t.row(idx).transpose().map(|z| z.conj());
            let norm = v.norm();
            for i in 0..p {
                q[(i, col)] = v[i] / norm;
            }
            col += 1;
        }
    }
    Ok(q)
}

/// Constants of Assumption 1 and of the state-growth envelopes.
pub fn structural_constants(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    kappa: f64,
) -> Result<StructuralConstants> {
    let p = a.nrows();
    if a.ncols() != p || b.nrows() != p || c.nrows() != p {
        return Err(Error::Dimension(format!(
            "A is {}x{}, B is {}x{}, C is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let (q, r) = (b.ncols(), c.ncols());
    let bbt = b * b.transpose();
    let (c_min, c_max) = symmetric_extremes(&bbt);
    if !(c_min > 1e-14 * c_max.max(f64::MIN_POSITIVE)) {
        return Err(Error::Assumption1Violation { c: c_min });
    }

    let q_basis = generalized_eigenbasis(a)?;
    let p_mat = q_basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidMatrix("eigenvector basis is singular".into()))?;
    let p_inf = inf_norm_complex(&p_mat);
    let p_inv_inf = inf_norm_complex(&q_basis);

    let mut l = DMatrix::<f64>::zeros(p, q + r);
    l.view_mut((0, 0), (p, q)).copy_from(b);
    l.view_mut((0, q), (p, r)).copy_from(c);
    let mut h = l.clone();
    h.view_mut((0, 0), (p, q)).copy_from(&(b * kappa));

    let norm_l_inf = inf_norm(&l);
    Ok(StructuralConstants {
        c: c_min,
        beta: p_inv_inf * p_inf * norm_l_inf,
        p_star: inf_norm(&h) * p_inf,
        norm_a2: spectral_norm(a),
        norm_l2: spectral_norm(&l),
        norm_l_inf,
        norm_c2: spectral_norm(c),
        cond_p: p_inf * p_inv_inf,
        kappa,
        p,
        q,
        r,
    })
}
