//! Small dense linear solves for the pooled covariance systems.
//!
//! The adjustment regressions involve symmetric positive semidefinite
//! matrices of order p (a handful of covariates), so a textbook Cholesky
//! with a pivoted-elimination fallback is all that is needed. Singularity
//! is detected through a reciprocal condition estimate in the 1-norm.

use crate::error::{Error, Result};

/// Reciprocal condition number below which a system is declared singular.
pub const RCOND_MIN: f64 = 1e-10;

/// Dense row-major square matrix of order `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMat {
    n: usize,
    a: Vec<f64>,
}

impl SmallMat {
    pub fn zeros(n: usize) -> Self {
        SmallMat {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn from_rows(n: usize, a: Vec<f64>) -> Self {
        assert_eq!(a.len(), n * n);
        SmallMat { n, a }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    /// Add `w * v vᵀ` (rank-one update), used when pooling covariances.
    pub fn add_scaled_outer(&mut self, w: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            let wv = w * v[i];
            for j in 0..self.n {
                self.a[i * self.n + j] += wv * v[j];
            }
        }
    }

    /// Add `w * other` elementwise.
    pub fn add_scaled(&mut self, w: f64, other: &[f64]) {
        debug_assert_eq!(other.len(), self.a.len());
        for (dst, src) in self.a.iter_mut().zip(other) {
            *dst += w * src;
        }
    }

    /// Maximum absolute column sum.
    fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.at(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Factorization of a small matrix, retained so several right-hand sides
/// and the condition estimate reuse the same decomposition.
enum Factor {
    /// Lower-triangular Cholesky factor, row-major.
    Cholesky(SmallMat),
    /// Row-pivoted LU: combined factors plus the permutation.
    Lu { lu: SmallMat, piv: Vec<usize> },
}

impl Factor {
    fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        match self {
            Factor::Cholesky(l) => {
                let n = l.n;
                // L y = b
                for i in 0..n {
                    let mut s = b[i];
                    for j in 0..i {
                        s -= l.at(i, j) * x[j];
                    }
                    x[i] = s / l.at(i, i);
                }
                // Lᵀ x = y
                for i in (0..n).rev() {
                    let mut s = x[i];
                    for j in i + 1..n {
                        s -= l.at(j, i) * x[j];
                    }
                    x[i] = s / l.at(i, i);
                }
            }
            Factor::Lu { lu, piv } => {
                let n = lu.n;
                for (i, &pi) in piv.iter().enumerate() {
                    let mut s = b[pi];
                    for j in 0..i {
                        s -= lu.at(i, j) * x[j];
                    }
                    x[i] = s;
                }
                for i in (0..n).rev() {
                    let mut s = x[i];
                    for j in i + 1..n {
                        s -= lu.at(i, j) * x[j];
                    }
                    x[i] = s / lu.at(i, i);
                }
            }
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        self.solve_into(b, &mut x);
        x
    }
}

fn cholesky(m: &SmallMat) -> Option<SmallMat> {
    let n = m.n;
    let mut l = SmallMat::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                *l.at_mut(i, i) = s.sqrt();
            } else {
                *l.at_mut(i, j) = s / l.at(j, j);
            }
        }
    }
    Some(l)
}

fn lu_partial_pivot(m: &SmallMat) -> Option<(SmallMat, Vec<usize>)> {
    let n = m.n;
    let mut a = m.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pi, mut pmax) = (k, a.at(k, k).abs());
        for i in k + 1..n {
            let v = a.at(i, k).abs();
            if v > pmax {
                pi = i;
                pmax = v;
            }
        }
        if pmax == 0.0 || !pmax.is_finite() {
            return None;
        }
        if pi != k {
            piv.swap(pi, k);
            for j in 0..n {
                let tmp = a.at(k, j);
                *a.at_mut(k, j) = a.at(pi, j);
                *a.at_mut(pi, j) = tmp;
            }
        }
        let pivot = a.at(k, k);
        for i in k + 1..n {
            let f = a.at(i, k) / pivot;
            *a.at_mut(i, k) = f;
            for j in k + 1..n {
                *a.at_mut(i, j) -= f * a.at(k, j);
            }
        }
    }
    Some((a, piv))
}

/// Reciprocal 1-norm condition estimate via explicit inverse columns.
/// Fine for the orders involved here.
fn rcond(m: &SmallMat, f: &Factor) -> f64 {
    let n = m.n;
    let norm_a = m.norm1();
    if norm_a == 0.0 {
        return 0.0;
    }
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut norm_inv: f64 = 0.0;
    for j in 0..n {
        e[j] = 1.0;
        f.solve_into(&e, &mut col);
        e[j] = 0.0;
        let s: f64 = col.iter().map(|v| v.abs()).sum();
        norm_inv = norm_inv.max(s);
    }
    1.0 / (norm_a * norm_inv)
}

/// Solve `A x = b` for a symmetric PSD `A`, with one right-hand side.
///
/// Tries Cholesky first; if the matrix is not numerically positive
/// definite, falls back to partially pivoted elimination. Returns
/// `SingularCovariance` when the reciprocal condition estimate falls
/// below [`RCOND_MIN`].
pub fn solve_spd(a: &SmallMat, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.n, b.len());
    if a.n == 0 {
        return Ok(Vec::new());
    }
    let factor = match cholesky(a) {
        Some(l) => Factor::Cholesky(l),
        None => match lu_partial_pivot(a) {
            Some((lu, piv)) => Factor::Lu { lu, piv },
            None => return Err(Error::SingularCovariance { rcond: 0.0 }),
        },
    };
    let rc = rcond(a, &factor);
    if !rc.is_finite() || rc < RCOND_MIN {
        return Err(Error::SingularCovariance { rcond: rc });
    }
    let x = factor.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "linear solve".into(),
        });
    }
    Ok(x)
}
