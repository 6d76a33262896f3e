//! Zero-inflated multivariate log-normal response model.
//!
//! `Y_k = exp(X_k) Z_k` with `X ~ N(mu, Sigma)` and independent `Z_k ~ Bernoulli(lambda_k)`.
//! Parameter order everywhere is `theta = (lambda, mu, vech Sigma)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::criterion::DesignCriterion;
use crate::error::{Result, SqdError};
pub use crate::linalg::duplication_matrix;
use crate::linalg::{self, spd_inverse, submatrix, subvector, sym_kron_block, vech_index, vech_len};
use crate::mvn::{add_covariance_information, invert_information};
use crate::pattern::{item_inclusion_of, DesignDistribution, Pattern, PatternSet};
use crate::rng::stream_rng;

/// `lambda` is clamped into `[LAMBDA_CLAMP, 1 - LAMBDA_CLAMP]` inside the lambda information block.
pub const LAMBDA_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ZmvlnParams {
    lambda: DVector<f64>,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl ZmvlnParams {
    pub fn new(lambda: DVector<f64>, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let k = mu.len();
        if lambda.len() != k || sigma.nrows() != k {
            return Err(SqdError::DimensionMismatch(format!(
                "lambda {}, mu {}, sigma {}x{}",
                lambda.len(),
                k,
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if let Some(bad) = lambda.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
            return Err(SqdError::InvalidArgument(format!(
                "nonzero probability {bad} outside (0, 1)"
            )));
        }
        linalg::check_covariance(&sigma)?;
        Ok(Self { lambda, mu, sigma })
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
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

    /// Dimension of `theta = (lambda, mu, vech Sigma)`.
    pub fn theta_dim(&self) -> usize {
        2 * self.k() + vech_len(self.k())
    }

    /// Flattened `theta`.
    pub fn theta(&self) -> DVector<f64> {
        let k = self.k();
        let mut t = DVector::zeros(self.theta_dim());
        t.rows_mut(0, k).copy_from(&self.lambda);
        t.rows_mut(k, k).copy_from(&self.mu);
        t.rows_mut(2 * k, vech_len(k)).copy_from(&linalg::vech(&self.sigma));
        t
    }

    /// Inverse of [`ZmvlnParams::theta`]; validates the result.
    pub fn from_theta(theta: &DVector<f64>, k: usize) -> Result<Self> {
        let lambda = theta.rows(0, k).into_owned();
        let mu = theta.rows(k, k).into_owned();
        let sigma = linalg::unvech(&theta.rows(2 * k, vech_len(k)).into_owned(), k);
        Self::new(lambda, mu, sigma)
    }
}

/// Population means of the response, `eta_k = lambda_k exp(mu_k + Sigma_kk / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaVector(pub DVector<f64>);

fn normal_log_density(x: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| SqdError::NotPositiveDefinite("sub-covariance".into()))?;
    let diff = x - mu;
    let z = chol.l().solve_lower_triangular(&diff).expect("triangular solve");
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (x.len() as f64 * (2.0 * PI).ln() + logdet + z.norm_squared()))
}

/// Log density of the observed part `y_obs` (ordered as `pattern.items()`); a zero
/// entry means a zero response.
pub fn zmvln_log_density(params: &ZmvlnParams, y_obs: &[f64], pattern: &Pattern) -> Result<f64> {
    let items = pattern.items();
    if y_obs.len() != items.len() {
        return Err(SqdError::DimensionMismatch(format!(
            "{} values for a pattern of {} items",
            y_obs.len(),
            items.len()
        )));
    }
    if items.iter().any(|&i| i >= params.k()) {
        return Err(SqdError::InvalidArgument("pattern out of range".into()));
    }
    if let Some(v) = y_obs.iter().find(|v| !(**v >= 0.0)) {
        return Err(SqdError::InvalidArgument(format!(
            "negative or undefined response {v}"
        )));
    }
    let mut logp = 0.0;
    let mut nz_items = Vec::new();
    let mut nz_logs = Vec::new();
    for (&y, &i) in y_obs.iter().zip(items) {
        let l = params.lambda[i];
        if y != 0.0 {
            logp += l.ln();
            nz_items.push(i);
            nz_logs.push(y.ln());
        } else {
            logp += (1.0 - l).ln();
        }
    }
    if !nz_items.is_empty() {
        let x = DVector::from_vec(nz_logs);
        let jac: f64 = x.iter().sum();
        logp += normal_log_density(
            &x,
            &subvector(&params.mu, &nz_items),
            &submatrix(&params.sigma, &nz_items),
        )? - jac;
    }
    Ok(logp)
}

/// `n x K` matrix of independent draws.
pub fn zmvln_sample(params: &ZmvlnParams, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = stream_rng(seed, "zmvln-sample", 0);
    sample_with(params, n, &mut rng)
}

pub(crate) fn sample_with<R: Rng + ?Sized>(
    params: &ZmvlnParams,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let k = params.k();
    let l = params
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| SqdError::NotPositiveDefinite("sigma".into()))?
        .unpack();
    let mut out = DMatrix::zeros(n, k);
    let mut z = DVector::zeros(k);
    for r in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let x = &params.mu + &l * &z;
        for c in 0..k {
            let u: f64 = rng.random();
            out[(r, c)] = if u < params.lambda[c] { x[c].exp() } else { 0.0 };
        }
    }
    Ok(out)
}

/// Probability that exactly the items of `subset` (a subset of `pattern`) are nonzero.
pub fn subset_weight(lambda: &DVector<f64>, pattern: &[usize], subset: &[usize]) -> f64 {
    pattern
        .iter()
        .map(|&i| {
            if subset.contains(&i) {
                lambda[i]
            } else {
                1.0 - lambda[i]
            }
        })
        .product()
}

/// All nonempty subsets of `items`, as local index lists.
fn nonempty_local_subsets(m: usize) -> Vec<Vec<usize>> {
    (1u64..(1u64 << m))
        .map(|mask| (0..m).filter(|b| mask & (1 << b) != 0).collect())
        .collect()
}

/// Per-pattern expected information blocks, averaged over the zero pattern.
#[derive(Debug, Clone)]
struct PatternBlocks {
    /// `m x m` mean block on the pattern items.
    mu_local: DMatrix<f64>,
    /// vech positions of the pairs inside the pattern.
    vech_pos: Vec<usize>,
    sigma_local: DMatrix<f64>,
}

fn pattern_blocks(params: &ZmvlnParams, items: &[usize]) -> Result<PatternBlocks> {
    let m = items.len();
    let k = params.k();
    let mut mu_local = DMatrix::zeros(m, m);
    let mut sigma_local: Option<DMatrix<f64>> = None;
    let mut vech_pos = Vec::new();
    for local in nonempty_local_subsets(m) {
        let sub_items: Vec<usize> = local.iter().map(|&a| items[a]).collect();
        let w = subset_weight(&params.lambda, items, &sub_items);
        let inv = spd_inverse(&submatrix(&params.sigma, &sub_items)).ok_or_else(|| {
            SqdError::SingularPattern {
                pattern: sub_items.clone(),
            }
        })?;
        let mut padded = DMatrix::zeros(m, m);
        for (a, &ia) in local.iter().enumerate() {
            for (b, &ib) in local.iter().enumerate() {
                padded[(ia, ib)] = inv[(a, b)];
            }
        }
        mu_local += &padded * w;
        let (pos, block) = sym_kron_block(&padded, items, k);
        match sigma_local.as_mut() {
            Some(s) => *s += block * w,
            None => {
                vech_pos = pos;
                sigma_local = Some(block * w);
            }
        }
    }
    Ok(PatternBlocks {
        mu_local,
        vech_pos,
        sigma_local: sigma_local.expect("pattern is nonempty"),
    })
}

/// A-criterion `tr(C I^{-1} C')` of the ZMVLN model with per-pattern blocks cached.
#[derive(Debug, Clone)]
pub struct ZmvlnCriterion {
    params: ZmvlnParams,
    pattern_set: Arc<PatternSet>,
    blocks: Vec<PatternBlocks>,
    lambda_var: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    c3: Vec<f64>,
    clamped: bool,
}

impl ZmvlnCriterion {
    pub fn new(params: ZmvlnParams, pattern_set: Arc<PatternSet>) -> Result<Self> {
        if pattern_set.k() != params.k() {
            return Err(SqdError::DimensionMismatch(format!(
                "pattern set has K = {} but parameters have K = {}",
                pattern_set.k(),
                params.k()
            )));
        }
        let blocks = pattern_set
            .patterns()
            .iter()
            .map(|p| pattern_blocks(&params, p.items()))
            .collect::<Result<Vec<_>>>()?;
        let mut clamped = false;
        let lambda_var = params
            .lambda
            .iter()
            .map(|&l| {
                let c = l.clamp(LAMBDA_CLAMP, 1.0 - LAMBDA_CLAMP);
                clamped |= c != l;
                c * (1.0 - c)
            })
            .collect();
        let e: Vec<f64> = (0..params.k())
            .map(|i| (params.mu[i] + 0.5 * params.sigma[(i, i)]).exp())
            .collect();
        let c1 = e.clone();
        let c2: Vec<f64> = e.iter().zip(params.lambda.iter()).map(|(e, l)| l * e).collect();
        let c3 = c2.iter().map(|x| 0.5 * x).collect();
        Ok(Self {
            params,
            pattern_set,
            blocks,
            lambda_var,
            c1,
            c2,
            c3,
            clamped,
        })
    }

    pub fn params(&self) -> &ZmvlnParams {
        &self.params
    }

    /// True when some `lambda` was clamped before entering the lambda block.
    pub fn lambda_clamped(&self) -> bool {
        self.clamped
    }

    fn assemble(&self, probs: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
        if probs.len() != self.pattern_set.len() {
            return Err(SqdError::DimensionMismatch(format!(
                "{} probabilities for {} patterns",
                probs.len(),
                self.pattern_set.len()
            )));
        }
        let k = self.params.k();
        let nv = vech_len(k);
        let xi = item_inclusion_of(&self.pattern_set, probs);
        let mut b_mu = DMatrix::zeros(k, k);
        let mut b_sigma = DMatrix::zeros(nv, nv);
        for ((p, blk), &w) in self.pattern_set.patterns().iter().zip(&self.blocks).zip(probs) {
            if w == 0.0 {
                continue;
            }
            let it = p.items();
            for (a, &i) in it.iter().enumerate() {
                for (b, &j) in it.iter().enumerate() {
                    b_mu[(i, j)] += w * blk.mu_local[(a, b)];
                }
            }
            for (a, &i) in blk.vech_pos.iter().enumerate() {
                for (b, &j) in blk.vech_pos.iter().enumerate() {
                    b_sigma[(i, j)] += w * blk.sigma_local[(a, b)];
                }
            }
        }
        Ok((xi, b_mu, b_sigma))
    }

    fn inverses(&self, probs: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let (xi, b_mu, b_sigma) = self.assemble(probs)?;
        let mu_inv = invert_information(&b_mu, &xi)?;
        let sigma_inv = spd_inverse(&b_sigma).ok_or(SqdError::SingularInformation {
            rcond: linalg::rcond_sym(&b_sigma),
        })?;
        Ok((xi, mu_inv, sigma_inv))
    }

    fn value_from(&self, xi: &[f64], mu_inv: &DMatrix<f64>, sigma_inv: &DMatrix<f64>) -> f64 {
        let k = self.params.k();
        (0..k)
            .map(|i| {
                let d = vech_index(i, i, k);
                self.c1[i] * self.c1[i] * self.lambda_var[i] / xi[i]
                    + self.c2[i] * self.c2[i] * mu_inv[(i, i)]
                    + self.c3[i] * self.c3[i] * sigma_inv[(d, d)]
            })
            .sum()
    }

    /// Dense `(2K + K(K+1)/2)`-square information matrix.
    pub fn information(&self, probs: &[f64]) -> Result<DMatrix<f64>> {
        let (xi, b_mu, b_sigma) = self.assemble(probs)?;
        if let Some(item) = xi.iter().position(|&x| !(x > 0.0)) {
            return Err(SqdError::UncoveredItem { item });
        }
        let k = self.params.k();
        let nv = vech_len(k);
        let mut out = DMatrix::zeros(2 * k + nv, 2 * k + nv);
        for i in 0..k {
            out[(i, i)] = xi[i] / self.lambda_var[i];
        }
        out.view_mut((k, k), (k, k)).copy_from(&b_mu);
        out.view_mut((2 * k, 2 * k), (nv, nv)).copy_from(&b_sigma);
        Ok(out)
    }
}

impl DesignCriterion for ZmvlnCriterion {
    fn pattern_set(&self) -> &PatternSet {
        &self.pattern_set
    }

    fn value(&self, probs: &[f64]) -> Result<f64> {
        let (xi, mu_inv, sigma_inv) = self.inverses(probs)?;
        Ok(self.value_from(&xi, &mu_inv, &sigma_inv))
    }

    fn value_and_gradient(&self, probs: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (xi, mu_inv, sigma_inv) = self.inverses(probs)?;
        let value = self.value_from(&xi, &mu_inv, &sigma_inv);
        let k = self.params.k();
        // G = B^{-1} C' C B^{-1} restricted to each block; C is diagonal within blocks.
        let g_mu = {
            let scaled = DMatrix::from_fn(k, k, |i, j| mu_inv[(i, j)] * self.c2[j] * self.c2[j]);
            &scaled * &mu_inv
        };
        let diag_pos: Vec<usize> = (0..k).map(|i| vech_index(i, i, k)).collect();
        let nv = vech_len(k);
        let rows = DMatrix::from_fn(k, nv, |a, j| sigma_inv[(diag_pos[a], j)] * self.c3[a]);
        let g_sigma = rows.transpose() * &rows;
        let grad = self
            .pattern_set
            .patterns()
            .iter()
            .zip(&self.blocks)
            .map(|(p, blk)| {
                let it = p.items();
                let mut s = 0.0;
                for &i in it {
                    s += self.c1[i] * self.c1[i] * self.lambda_var[i] / (xi[i] * xi[i]);
                }
                for (a, &i) in it.iter().enumerate() {
                    for (b, &j) in it.iter().enumerate() {
                        s += g_mu[(i, j)] * blk.mu_local[(a, b)];
                    }
                }
                for (a, &i) in blk.vech_pos.iter().enumerate() {
                    for (b, &j) in blk.vech_pos.iter().enumerate() {
                        s += g_sigma[(i, j)] * blk.sigma_local[(a, b)];
                    }
                }
                -s
            })
            .collect();
        Ok((value, grad))
    }

    fn warnings(&self) -> Vec<String> {
        if self.clamped {
            vec![format!(
                "nonzero probability clamped into [{LAMBDA_CLAMP:e}, 1 - {LAMBDA_CLAMP:e}]"
            )]
        } else {
            Vec::new()
        }
    }
}

/// Block-diagonal Fisher information of `theta` under design `d`.
pub fn zmvln_fisher(params: &ZmvlnParams, d: &DesignDistribution) -> Result<DMatrix<f64>> {
    ZmvlnCriterion::new(params.clone(), d.shared_pattern_set())?.information(d.probs())
}

/// `eta` and its Jacobian `C = [C1 C2 C3]` with respect to `theta`.
pub fn eta_and_jacobian(params: &ZmvlnParams) -> (EtaVector, DMatrix<f64>) {
    let k = params.k();
    let mut c = DMatrix::zeros(k, params.theta_dim());
    let mut eta = DVector::zeros(k);
    for i in 0..k {
        let e = (params.mu[i] + 0.5 * params.sigma[(i, i)]).exp();
        let l = params.lambda[i];
        eta[i] = l * e;
        c[(i, i)] = e;
        c[(i, k + i)] = l * e;
        c[(i, 2 * k + vech_index(i, i, k))] = 0.5 * l * e;
    }
    (EtaVector(eta), c)
}

/// `tr(C I^{-1} C')`.
pub fn a_criterion_zmvln(params: &ZmvlnParams, d: &DesignDistribution) -> Result<f64> {
    ZmvlnCriterion::new(params.clone(), d.shared_pattern_set())?.value(d.probs())
}

pub fn a_gradient_zmvln(params: &ZmvlnParams, d: &DesignDistribution) -> Result<Vec<f64>> {
    Ok(ZmvlnCriterion::new(params.clone(), d.shared_pattern_set())?
        .value_and_gradient(d.probs())?
        .1)
}

/// Asymptotic covariance of `eta_hat`, `C I^{-1} C'`, from dense matrices.
pub fn eta_covariance(params: &ZmvlnParams, d: &DesignDistribution) -> Result<DMatrix<f64>> {
    let info = zmvln_fisher(params, d)?;
    let inv = spd_inverse(&info).ok_or(SqdError::SingularInformation {
        rcond: linalg::rcond_sym(&info),
    })?;
    let (_, c) = eta_and_jacobian(params);
    Ok(&c * inv * c.transpose())
}

/// Same as [`MvnCriterion`](crate::mvn::MvnCriterion) blocks but for one explicit
/// subset; kept for tests and the dense reference path.
pub fn subset_information(params: &ZmvlnParams, subset: &[usize]) -> Result<DMatrix<f64>> {
    let k = params.k();
    let nv = vech_len(k);
    let inv = spd_inverse(&submatrix(&params.sigma, subset)).ok_or_else(|| {
        SqdError::SingularPattern {
            pattern: subset.to_vec(),
        }
    })?;
    let mut out = DMatrix::zeros(k + nv, k + nv);
    for (a, &i) in subset.iter().enumerate() {
        for (b, &j) in subset.iter().enumerate() {
            out[(i, j)] = inv[(a, b)];
        }
    }
    add_covariance_information(&mut out, k, &inv, subset, k, 1.0);
    Ok(out)
}
