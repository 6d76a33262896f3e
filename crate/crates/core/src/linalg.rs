//! Small dense linear-algebra helpers shared by the model modules.
//!
//! vech convention: columns of the lower triangle stacked left to right,
//! diagonal included, so `vech(S) = (s00, s10, .., s(K-1)0, s11, s21, ..)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SqdError};

/// Reciprocal condition number below which an information matrix is treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

pub fn vech_len(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Position of element `(i, j)` of a symmetric `k x k` matrix inside `vech`.
pub fn vech_index(i: usize, j: usize, k: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    c * k - c * c.saturating_sub(1) / 2 + (r - c)
}

/// `vech(S)` under the module convention.
pub fn vech(s: &DMatrix<f64>) -> DVector<f64> {
    let k = s.nrows();
    let mut out = DVector::zeros(vech_len(k));
    for j in 0..k {
        for i in j..k {
            out[vech_index(i, j, k)] = s[(i, j)];
        }
    }
    out
}

/// Inverse of `vech`.
pub fn unvech(v: &DVector<f64>, k: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(k, k);
    for j in 0..k {
        for i in j..k {
            let x = v[vech_index(i, j, k)];
            s[(i, j)] = x;
            s[(j, i)] = x;
        }
    }
    s
}

/// Duplication matrix `D_K` (`K^2 x K(K+1)/2`) with `D_K vech(S) = vec(S)`;
/// `vec` stacks columns.
pub fn duplication_matrix(k: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(k * k, vech_len(k));
    for j in 0..k {
        for i in 0..k {
            d[(i + j * k, vech_index(i, j, k))] = 1.0;
        }
    }
    d
}

/// Extracts `m[idx, idx]`.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |a, _| v[idx[a]])
}

/// Ratio of the smallest to the largest eigenvalue of a symmetric matrix
/// (0 when the smallest is nonpositive).
pub fn rcond_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min > 0.0) {
        0.0
    } else {
        min / max
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn spd_logdet(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Checks symmetry and positive definiteness of a covariance matrix.
pub fn check_covariance(sigma: &DMatrix<f64>) -> Result<()> {
    if sigma.nrows() != sigma.ncols() {
        return Err(SqdError::DimensionMismatch(format!(
            "covariance is {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if !is_symmetric(sigma, 1e-10) {
        return Err(SqdError::InvalidArgument(
            "covariance matrix is not symmetric".into(),
        ));
    }
    if sigma.clone().cholesky().is_none() {
        return Err(SqdError::NotPositiveDefinite(
            "Cholesky factorization of the covariance failed".into(),
        ));
    }
    Ok(())
}

/// Local block of `0.5 * D_K^T (M (x) M) D_K` for a symmetric `M` supported on
/// `support` (sorted item indices). Rows and columns follow the returned vech
/// positions, which are the pairs `(r, c)` with `r >= c`, both in `support`.
pub fn sym_kron_block(
    m_local: &DMatrix<f64>,
    support: &[usize],
    k: usize,
) -> (Vec<usize>, DMatrix<f64>) {
    let s = support.len();
    let mut pairs = Vec::with_capacity(s * (s + 1) / 2);
    for c in 0..s {
        for r in c..s {
            pairs.push((r, c));
        }
    }
    let positions: Vec<usize> = pairs
        .iter()
        .map(|&(r, c)| vech_index(support[r], support[c], k))
        .collect();
    let np = pairs.len();
    let mut block = DMatrix::zeros(np, np);
    for (p, &(a, b)) in pairs.iter().enumerate() {
        for (q, &(c, d)) in pairs.iter().enumerate() {
            // sum over the vec positions that duplicate (a,b) and (c,d)
            let mut v = 0.0;
            let left: &[(usize, usize)] = if a == b { &[(a, b)] } else { &[(a, b), (b, a)] };
            let right: &[(usize, usize)] = if c == d { &[(c, d)] } else { &[(c, d), (d, c)] };
            for &(i, j) in left {
                for &(kk, l) in right {
                    v += m_local[(i, kk)] * m_local[(j, l)];
                }
            }
            block[(p, q)] = 0.5 * v;
        }
    }
    (positions, block)
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}
