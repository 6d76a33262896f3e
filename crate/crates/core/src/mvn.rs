//! Multivariate normal response model: per-pattern information, the design
//! Fisher information for the mean, and the A-criterion with its gradient.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::criterion::DesignCriterion;
use crate::error::{Result, SqdError};
use crate::linalg::{self, rcond_sym, spd_inverse, submatrix, sym_kron_block, vech_len, RCOND_THRESHOLD};
use crate::pattern::{item_inclusion_of, DesignDistribution, Pattern, PatternSet};

/// Mean vector and covariance matrix of a `K`-variate normal response.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnParams {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl MvnParams {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != mu.len() {
            return Err(SqdError::DimensionMismatch(format!(
                "mu has length {} but sigma is {}x{}",
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        linalg::check_covariance(&sigma)?;
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }
}

/// Per-observation information for the mean under one pattern.
#[derive(Debug, Clone)]
pub struct PatternInfo {
    pub pattern: Pattern,
    /// `K x K`, zero outside the pattern rows/columns.
    pub m: DMatrix<f64>,
}

fn local_inverse(sigma: &DMatrix<f64>, items: &[usize]) -> Result<DMatrix<f64>> {
    let sub = submatrix(sigma, items);
    spd_inverse(&sub).ok_or_else(|| SqdError::SingularPattern {
        pattern: items.to_vec(),
    })
}

fn embed(local: &DMatrix<f64>, items: &[usize], k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(k, k);
    for (a, &i) in items.iter().enumerate() {
        for (b, &j) in items.iter().enumerate() {
            out[(i, j)] = local[(a, b)];
        }
    }
    out
}

pub fn pattern_info(params: &MvnParams, pattern: &Pattern) -> Result<PatternInfo> {
    let k = params.k();
    if pattern.items().iter().any(|&i| i >= k) {
        return Err(SqdError::InvalidArgument(format!(
            "pattern {:?} invalid for K = {k}",
            pattern.items()
        )));
    }
    let local = local_inverse(&params.sigma, pattern.items())?;
    Ok(PatternInfo {
        pattern: pattern.clone(),
        m: embed(&local, pattern.items(), k),
    })
}

/// A-criterion of the MVN model with per-pattern inverses cached.
#[derive(Debug, Clone)]
pub struct MvnCriterion {
    params: MvnParams,
    pattern_set: Arc<PatternSet>,
    local: Vec<DMatrix<f64>>,
}

impl MvnCriterion {
    pub fn new(params: MvnParams, pattern_set: Arc<PatternSet>) -> Result<Self> {
        if pattern_set.k() != params.k() {
            return Err(SqdError::DimensionMismatch(format!(
                "pattern set has K = {} but parameters have K = {}",
                pattern_set.k(),
                params.k()
            )));
        }
        let local = pattern_set
            .patterns()
            .iter()
            .map(|p| local_inverse(&params.sigma, p.items()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            pattern_set,
            local,
        })
    }

    pub fn params(&self) -> &MvnParams {
        &self.params
    }

    /// `sum_j p_j M_j`.
    pub fn information(&self, probs: &[f64]) -> DMatrix<f64> {
        let k = self.params.k();
        let mut m = DMatrix::zeros(k, k);
        for ((p, local), &w) in self.pattern_set.patterns().iter().zip(&self.local).zip(probs) {
            if w == 0.0 {
                continue;
            }
            let it = p.items();
            for (a, &i) in it.iter().enumerate() {
                for (b, &j) in it.iter().enumerate() {
                    m[(i, j)] += w * local[(a, b)];
                }
            }
        }
        m
    }

    fn inverse_information(&self, probs: &[f64]) -> Result<DMatrix<f64>> {
        if probs.len() != self.pattern_set.len() {
            return Err(SqdError::DimensionMismatch(format!(
                "{} probabilities for {} patterns",
                probs.len(),
                self.pattern_set.len()
            )));
        }
        let m = self.information(probs);
        invert_information(&m, &item_inclusion_of(&self.pattern_set, probs))
    }
}

/// Inverts a mean-information matrix, reporting uncovered items first.
pub(crate) fn invert_information(m: &DMatrix<f64>, inclusion: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(item) = inclusion.iter().position(|&x| !(x > 0.0)) {
        return Err(SqdError::UncoveredItem { item });
    }
    let rcond = rcond_sym(m);
    if rcond < RCOND_THRESHOLD {
        let item = inclusion
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if inclusion[item] < 1e-300 {
            return Err(SqdError::UncoveredItem { item });
        }
        return Err(SqdError::SingularInformation { rcond });
    }
    spd_inverse(m).ok_or(SqdError::SingularInformation { rcond })
}

impl DesignCriterion for MvnCriterion {
    fn pattern_set(&self) -> &PatternSet {
        &self.pattern_set
    }

    fn value(&self, probs: &[f64]) -> Result<f64> {
        Ok(self.inverse_information(probs)?.trace())
    }

    fn value_and_gradient(&self, probs: &[f64]) -> Result<(f64, Vec<f64>)> {
        let inv = self.inverse_information(probs)?;
        let w = &inv * &inv;
        let grad = self
            .pattern_set
            .patterns()
            .iter()
            .zip(&self.local)
            .map(|(p, local)| {
                let it = p.items();
                let mut s = 0.0;
                for (a, &i) in it.iter().enumerate() {
                    for (b, &j) in it.iter().enumerate() {
                        s += w[(i, j)] * local[(a, b)];
                    }
                }
                -s
            })
            .collect();
        Ok((inv.trace(), grad))
    }
}

/// Design Fisher information for the mean, `sum_j P(A_j) tau_j' Sigma_j^{-1} tau_j`.
pub fn mu_fisher(params: &MvnParams, d: &DesignDistribution) -> Result<DMatrix<f64>> {
    let crit = MvnCriterion::new(params.clone(), d.shared_pattern_set())?;
    let m = crit.information(d.probs());
    invert_information(&m, &d.item_inclusion())?;
    Ok(m)
}

/// Trace of the inverse mean information.
pub fn a_criterion_mvn(params: &MvnParams, d: &DesignDistribution) -> Result<f64> {
    MvnCriterion::new(params.clone(), d.shared_pattern_set())?.value(d.probs())
}

/// Gradient of [`a_criterion_mvn`] with respect to the probability vector.
pub fn a_gradient_mvn(params: &MvnParams, d: &DesignDistribution) -> Result<Vec<f64>> {
    Ok(MvnCriterion::new(params.clone(), d.shared_pattern_set())?
        .value_and_gradient(d.probs())?
        .1)
}

/// Adds `weight * 0.5 D' (M (x) M) D` for `M` supported on `items` into `target`,
/// whose vech block starts at row/column `offset`.
pub(crate) fn add_covariance_information(
    target: &mut DMatrix<f64>,
    offset: usize,
    local: &DMatrix<f64>,
    items: &[usize],
    k: usize,
    weight: f64,
) {
    let (pos, block) = sym_kron_block(local, items, k);
    for (a, &i) in pos.iter().enumerate() {
        for (b, &j) in pos.iter().enumerate() {
            target[(offset + i, offset + j)] += weight * block[(a, b)];
        }
    }
}

/// Full information for `(mu, vech Sigma)`: block diagonal with the mean block
/// equal to [`mu_fisher`] and covariance block `sum_j P(A_j) 0.5 D'(M_j (x) M_j) D`.
pub fn full_fisher_mvn(params: &MvnParams, d: &DesignDistribution) -> Result<DMatrix<f64>> {
    let k = params.k();
    let mu_block = mu_fisher(params, d)?;
    let dim = k + vech_len(k);
    let mut out = DMatrix::zeros(dim, dim);
    out.view_mut((0, 0), (k, k)).copy_from(&mu_block);
    for (p, &w) in d.pattern_set().patterns().iter().zip(d.probs()) {
        if w == 0.0 {
            continue;
        }
        let local = local_inverse(&params.sigma, p.items())?;
        add_covariance_information(&mut out, k, &local, p.items(), k, w);
    }
    Ok(out)
}
