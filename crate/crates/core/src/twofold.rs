//! Double-word ("twofold") arithmetic for the running sums of the estimator.
//!
//! Unstable trajectories make the sample covariance grow like `e^{2 lambda_1 T}`
//! while its smallest eigenvalue grows only linearly, so rounding each entry to
//! a single `f64` already destroys the weak directions. Sums are kept as an
//! unevaluated pair `hi + lo` with `|lo| <= ulp(hi) / 2`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;

/// Error-free transformation: `a + b = s + e` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Error-free transformation: `a * b = p + e` exactly (needs a correctly rounded FMA).
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Twofold {
    pub hi: f64,
    pub lo: f64,
}

impl Twofold {
    pub const ZERO: Twofold = Twofold { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Twofold { hi: x, lo: 0.0 }
    }

    #[inline]
    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Twofold { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }




    /// Adds the exact product `a * b`.
    #[inline]
    pub fn add_prod(self, a: f64, b: f64) -> Twofold {
        let (p, e) = two_prod(a, b);
        self.add(Twofold::renorm(p, e))
    }

    /// `self * x`, accurate to roughly twice working precision.
    #[inline]
    pub fn mul_f64(self, x: f64) -> Twofold {
        let (p, e) = two_prod(self.hi, x);
        Self::renorm(p, e + self.lo * x)
    }



    /// Square root; NaN for negative input.
    pub fn sqrt(self) -> Twofold {
        if self.hi == 0.0 {
            return Twofold::ZERO;
        }
        let s = self.hi.sqrt();
        let (p, e) = two_prod(s, s);
        let r = self.sub(Twofold { hi: p, lo: e });
        Self::renorm(s, r.hi / (2.0 * s))
    }
}

impl Add for Twofold {
    type Output = Twofold;

    #[inline]
    fn add(self, other: Twofold) -> Twofold {
        let (s, e) = two_sum(self.hi, other.hi);
        let (t, f) = two_sum(self.lo, other.lo);
        let partial = Self::renorm(s, e + t);
        Self::renorm(partial.hi, partial.lo + f)
    }
}

impl Neg for Twofold {
    type Output = Twofold;

    #[inline]
    fn neg(self) -> Twofold {
        Twofold {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Twofold {
    type Output = Twofold;

    #[inline]
    fn sub(self, other: Twofold) -> Twofold {
        self.add(other.neg())
    }
}

impl Mul for Twofold {
    type Output = Twofold;

    #[inline]
    fn mul(self, other: Twofold) -> Twofold {
        let (p, e) = two_prod(self.hi, other.hi);
        Self::renorm(p, e + (self.hi * other.lo + self.lo * other.hi))
    }
}

impl Div for Twofold {
    type Output = Twofold;

    fn div(self, other: Twofold) -> Twofold {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul_f64(q1));
        let q2 = r.hi / other.hi;
        let r = r.sub(other.mul_f64(q2));
        let q3 = r.hi / other.hi;
        Self::renorm(q1, q2).add(Twofold::from_f64(q3))
    }
}

/// Dense matrix of [`Twofold`] entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TwofoldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Twofold>,
}

impl TwofoldMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        TwofoldMatrix {
            rows,
            cols,
            data: vec![Twofold::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out.set(i, i, Twofold::from_f64(1.0));
        }
        out
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = Twofold::from_f64(m[(i, j)]);
            }
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Twofold {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Twofold) {
        self.data[i * self.cols + j] = v;
    }

    /// `self += u v^T` with exact products.
    #[inline]
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (i, &ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (cell, &vj) in row.iter_mut().zip(v) {
                *cell = cell.add_prod(ui, vj);
            }
        }
    }

    /// `self += u (v_hi + v_lo)^T`.
    #[inline]
    pub fn add_outer_twofold(&mut self, u: &[f64], v: &[Twofold]) {
        for (i, &ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (cell, vj) in row.iter_mut().zip(v) {
                *cell = cell.add(vj.mul_f64(ui));
            }
        }
    }

    /// `self += u v^T` with both vectors in twofold.
    #[inline]
    pub fn add_outer_dd(&mut self, u: &[Twofold], v: &[Twofold]) {
        for (i, ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (cell, vj) in row.iter_mut().zip(v) {
                *cell = cell.add(ui.mul(*vj));
            }
        }
    }

    /// `self += u v^T` with twofold `u` and plain `v`.
    #[inline]
    pub fn add_outer_mixed(&mut self, u: &[Twofold], v: &[f64]) {
        for (i, ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (cell, &vj) in row.iter_mut().zip(v) {
                *cell = cell.add(ui.mul_f64(vj));
            }
        }
    }

    pub fn add_assign(&mut self, other: &TwofoldMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = a.add(*b);
        }
    }

    pub fn scaled(&self, x: f64) -> TwofoldMatrix {
        TwofoldMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|t| t.mul_f64(x)).collect(),
        }
    }

    pub fn transpose(&self) -> TwofoldMatrix {
        let mut out = TwofoldMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// `self * m` where `m` is an ordinary matrix; products and sums are carried in twofold.
    pub fn mul_matrix(&self, m: &DMatrix<f64>) -> TwofoldMatrix {
        assert_eq!(self.cols, m.nrows());
        let mut out = TwofoldMatrix::zeros(self.rows, m.ncols());
        for i in 0..self.rows {
            for j in 0..m.ncols() {
                let mut acc = Twofold::ZERO;
                for k in 0..self.cols {
                    acc = acc.add(self.get(i, k).mul_f64(m[(k, j)]));
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn sub(&self, other: &TwofoldMatrix) -> TwofoldMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        TwofoldMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a.sub(*b))
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_f64())
    }
}

/// Cholesky factor `V = L L^T` computed entirely in twofold arithmetic,
/// usable up to condition numbers near `1e30`.
#[derive(Debug, Clone)]
pub struct TwofoldCholesky {
    l: TwofoldMatrix,
}

impl TwofoldCholesky {
    /// `None` unless every pivot is positive.
    pub fn new(v: &TwofoldMatrix) -> Option<Self> {
        let n = v.rows();
        assert_eq!(n, v.cols());
        let mut l = TwofoldMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = v.get(j, j);
            for k in 0..j {
                let ljk = l.get(j, k);
                d = d.sub(ljk.mul(ljk));
            }
            if !(d.hi > 0.0) {
                return None;
            }
            let ljj = d.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let mut acc = v.get(i, j);
                for k in 0..j {
                    acc = acc.sub(l.get(i, k).mul(l.get(j, k)));
                }
                l.set(i, j, acc.div(ljj));
            }
        }
        Some(TwofoldCholesky { l })
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &TwofoldMatrix) -> TwofoldMatrix {
        let n = self.l.rows();
        assert_eq!(b.rows(), n);
        let mut y = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut acc = y.get(i, c);
                for k in 0..i {
                    acc = acc.sub(self.l.get(i, k).mul(y.get(k, c)));
                }
                y.set(i, c, acc.div(self.l.get(i, i)));
            }
        }
        y
    }

    /// `V^{-1} b`.
    pub fn solve(&self, b: &TwofoldMatrix) -> TwofoldMatrix {
        let n = self.l.rows();
        let mut x = self.solve_lower(b);
        for c in 0..b.cols() {
            for i in (0..n).rev() {
                let mut acc = x.get(i, c);
                for k in (i + 1)..n {
                    acc = acc.sub(self.l.get(k, i).mul(x.get(k, c)));
                }
                x.set(i, c, acc.div(self.l.get(i, i)));
            }
        }
        x
    }
}
