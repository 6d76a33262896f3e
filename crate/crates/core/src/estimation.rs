//! Estimators for data observed under a split questionnaire.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SqdError};
use crate::linalg::{spd_inverse, submatrix, subvector, symmetrize};
use crate::mvn::MvnParams;
use crate::rng::stream_rng;

pub const DEFAULT_EM_TOL: f64 = 1e-8;
pub const DEFAULT_EM_MAX_ITERS: usize = 2000;

/// `n x K` responses with a mask of administered cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    values: DMatrix<f64>,
    observed: Vec<bool>,
}

impl ObservedDataset {
    /// `observed` is row-major, `n * K` long. Unobserved values are ignored.
    pub fn new(values: DMatrix<f64>, observed: Vec<bool>) -> Result<Self> {
        let (n, k) = values.shape();
        if observed.len() != n * k {
            return Err(SqdError::DimensionMismatch(format!(
                "mask has {} cells for a {n}x{k} matrix",
                observed.len()
            )));
        }
        for i in 0..n {
            for j in 0..k {
                if observed[i * k + j] && !values[(i, j)].is_finite() {
                    return Err(SqdError::InvalidArgument(format!(
                        "observed cell ({i}, {j}) is not finite"
                    )));
                }
            }
        }
        Ok(Self { values, observed })
    }

    pub fn complete(values: DMatrix<f64>) -> Result<Self> {
        let len = values.len();
        Self::new(values, vec![true; len])
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.k() + j]
    }

    /// The observed value, if any.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.values[(i, j)])
    }

    pub fn observed_items(&self, i: usize) -> Vec<usize> {
        (0..self.k()).filter(|&j| self.is_observed(i, j)).collect()
    }

    pub fn observed_count(&self, j: usize) -> usize {
        (0..self.n()).filter(|&i| self.is_observed(i, j)).count()
    }

    pub fn total_observed(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    /// Rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let k = self.k();
        let values = DMatrix::from_fn(rows.len(), k, |r, j| self.values[(rows[r], j)]);
        let observed = rows
            .iter()
            .flat_map(|&i| self.observed[i * k..(i + 1) * k].iter().copied())
            .collect();
        Self { values, observed }
    }

    /// Columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let n = self.n();
        let values = DMatrix::from_fn(n, cols.len(), |i, c| self.values[(i, cols[c])]);
        let observed = (0..n)
            .flat_map(|i| cols.iter().map(move |&c| (i, c)))
            .map(|(i, c)| self.is_observed(i, c))
            .collect();
        Self { values, observed }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.k() != other.k() {
            return Err(SqdError::DimensionMismatch("column counts differ".into()));
        }
        let n = self.n() + other.n();
        let values = DMatrix::from_fn(n, self.k(), |i, j| {
            if i < self.n() {
                self.values[(i, j)]
            } else {
                other.values[(i - self.n(), j)]
            }
        });
        let mut observed = self.observed.clone();
        observed.extend_from_slice(&other.observed);
        Ok(Self { values, observed })
    }
}

/// Output of the model estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub mu_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub lambda_hat: Option<DVector<f64>>,
    /// `lambda_hat * exp(mu_hat + sigma_hat_kk / 2)`.
    pub eta_hat: Option<DVector<f64>>,
    /// `lambda_hat * mu_hat`, the literal plug-in of the log-scale mean.
    pub eta_hat_literal: Option<DVector<f64>>,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Items whose lognormal part is undefined (no nonzero observation).
    pub undefined_items: Vec<usize>,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().unwrap_or(&f64::NAN)
    }

    /// Estimated population means on the response scale.
    pub fn mean_estimate(&self) -> &DVector<f64> {
        self.eta_hat.as_ref().unwrap_or(&self.mu_hat)
    }
}

/// Hajek estimator of each item mean; `None` where the item has no observation.
pub fn hk_mean(data: &ObservedDataset, inclusion: &[f64]) -> Result<Vec<Option<f64>>> {
    if inclusion.len() != data.k() {
        return Err(SqdError::DimensionMismatch(format!(
            "{} inclusion probabilities for {} items",
            inclusion.len(),
            data.k()
        )));
    }
    (0..data.k())
        .map(|j| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..data.n() {
                if let Some(y) = data.get(i, j) {
                    if !(inclusion[j] > 0.0) {
                        return Err(SqdError::InvalidArgument(format!(
                            "item {j} observed with inclusion probability {}",
                            inclusion[j]
                        )));
                    }
                    num += y / inclusion[j];
                    den += 1.0 / inclusion[j];
                }
            }
            Ok((den > 0.0).then(|| num / den))
        })
        .collect()
}

/// Approximate variance of the Hajek mean of one item when `n` of `N` units are
/// sampled and the item is administered with probability `p`.
pub fn hk_variance_approx(population: &[f64], n: usize, p: f64) -> Result<f64> {
    let big_n = population.len();
    if !(p > 0.0 && p <= 1.0) {
        return Err(SqdError::InvalidArgument(format!("inclusion probability {p} outside (0, 1]")));
    }
    if big_n < 2 || n == 0 || n > big_n {
        return Err(SqdError::InvalidArgument(format!(
            "need 0 < n <= N and N >= 2, got n = {n}, N = {big_n}"
        )));
    }
    let nf = big_n as f64;
    let mean = population.iter().sum::<f64>() / nf;
    let ss: f64 = population.iter().map(|y| (y - mean).powi(2)).sum();
    Ok((nf / (n as f64 * p) - 1.0) * ss / (nf * (nf - 1.0)))
}

/// Rows sharing one observation pattern, reduced to sufficient statistics.
#[derive(Debug, Clone)]
struct PatternGroup {
    obs: Vec<usize>,
    mis: Vec<usize>,
    n: f64,
    sum: DVector<f64>,
    cross: DMatrix<f64>,
}

fn group_rows(data: &ObservedDataset) -> (Vec<PatternGroup>, usize) {
    let k = data.k();
    let mut map: BTreeMap<Vec<usize>, PatternGroup> = BTreeMap::new();
    let mut dropped = 0;
    for i in 0..data.n() {
        let obs = data.observed_items(i);
        if obs.is_empty() {
            dropped += 1;
            continue;
        }
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|&j| data.values[(i, j)]));
        let entry = map.entry(obs.clone()).or_insert_with(|| PatternGroup {
            mis: (0..k).filter(|j| !obs.contains(j)).collect(),
            n: 0.0,
            sum: DVector::zeros(obs.len()),
            cross: DMatrix::zeros(obs.len(), obs.len()),
            obs,
        });
        entry.n += 1.0;
        entry.sum += &y;
        entry.cross += &y * y.transpose();
    }
    (map.into_values().collect(), dropped)
}

fn observed_loglik(groups: &[PatternGroup], mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let mut ll = 0.0;
    for g in groups {
        let s = submatrix(sigma, &g.obs);
        let chol = s
            .cholesky()
            .ok_or_else(|| SqdError::NotPositiveDefinite("covariance iterate".into()))?;
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = chol.inverse();
        let m = subvector(mu, &g.obs);
        let centered = &g.cross - &g.sum * m.transpose() - &m * g.sum.transpose()
            + &m * m.transpose() * g.n;
        let quad = (inv.component_mul(&centered)).sum();
        ll += -0.5 * (g.n * (g.obs.len() as f64 * (2.0 * PI).ln() + logdet) + quad);
    }
    Ok(ll)
}

/// Log-likelihood of the observed cells under `N(mu, sigma)`.
pub fn mvn_observed_loglik(data: &ObservedDataset, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    observed_loglik(&group_rows(data).0, mu, sigma)
}

/// One EM update in closed form. With `G = Sigma[:, o] Sigma_oo^-1` per pattern, the
/// completed sufficient statistics sum to
/// `T1 = n mu + Sigma w` and `T2 = n (mu mu' + Sigma) + mu h' + h mu' + Sigma Q Sigma`,
/// where `h = Sigma w`, `w` stacks `Sigma_oo^-1 (S1 - n_g mu_o)` and `Q` stacks
/// `Sigma_oo^-1 (D2 - n_g Sigma_oo) Sigma_oo^-1` over patterns.
fn em_step(groups: &[PatternGroup], mu: &DVector<f64>, sigma: &DMatrix<f64>, n: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = mu.len();
    let mut w = DVector::zeros(k);
    let mut q = DMatrix::zeros(k, k);
    for g in groups {
        let o = &g.obs;
        let s_oo = submatrix(sigma, o);
        let inv = spd_inverse(&s_oo)
            .ok_or_else(|| SqdError::NotPositiveDefinite("observed sub-covariance".into()))?;
        let mu_o = subvector(mu, o);
        let d1 = &g.sum - &mu_o * g.n;
        let d2 = &g.cross - &g.sum * mu_o.transpose() - &mu_o * g.sum.transpose()
            + &mu_o * mu_o.transpose() * g.n;
        let local_w = &inv * d1;
        let local_q = &inv * (d2 - s_oo * g.n) * &inv;
        for (a, &i) in o.iter().enumerate() {
            w[i] += local_w[a];
            for (b, &j) in o.iter().enumerate() {
                q[(i, j)] += local_q[(a, b)];
            }
        }
    }
    let h = sigma * w;
    let mu_new = mu + &h / n;
    let mut sigma_new = sigma + sigma * q * sigma / n - &h * h.transpose() / (n * n);
    symmetrize(&mut sigma_new);
    Ok((mu_new, sigma_new))
}

#[derive(Default)]
struct Repair {
    used: bool,
    warning: Option<String>,
}

/// One EM update, with a single diagonal ridge repair allowed per fit.
fn em_map(
    groups: &[PatternGroup],
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    n: f64,
    repair: &mut Repair,
    it: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (m, mut s) = em_step(groups, mu, sigma, n)?;
    if s.clone().cholesky().is_none() {
        if repair.used {
            return Err(SqdError::NotPositiveDefinite(format!(
                "EM covariance iterate lost positive definiteness at iteration {it}"
            )));
        }
        let ridge = DMatrix::from_diagonal(&(s.diagonal() * 1e-8));
        s += ridge;
        repair.used = true;
        repair.warning = Some(format!("ridge repair applied at iteration {it}"));
        if s.clone().cholesky().is_none() {
            return Err(SqdError::NotPositiveDefinite(
                "EM covariance iterate is not positive definite after ridge repair".into(),
            ));
        }
    }
    Ok((m, s))
}

/// Squared extrapolation (SQUAREM, steplength S3) from three successive EM iterates,
/// followed by one stabilizing EM update. `None` when the extrapolated covariance
/// is not positive definite.
fn squarem_candidate(
    groups: &[PatternGroup],
    t0: (&DVector<f64>, &DMatrix<f64>),
    t1: (&DVector<f64>, &DMatrix<f64>),
    t2: (&DVector<f64>, &DMatrix<f64>),
    n: f64,
    it: usize,
) -> Result<Option<(DVector<f64>, DMatrix<f64>, f64)>> {
    let r_mu = t1.0 - t0.0;
    let r_s = t1.1 - t0.1;
    let v_mu = t2.0 - t1.0 - &r_mu;
    let v_s = t2.1 - t1.1 - &r_s;
    let rr = r_mu.norm_squared() + r_s.norm_squared();
    let vv = v_mu.norm_squared() + v_s.norm_squared();
    if !(vv > 0.0) || !(rr > 0.0) {
        return Ok(None);
    }
    let alpha = -(rr / vv).sqrt();
    if alpha > -1.0 {
        return Ok(None);
    }
    let mu = t0.0 - &r_mu * (2.0 * alpha) + &v_mu * (alpha * alpha);
    let mut sigma = t0.1 - &r_s * (2.0 * alpha) + &v_s * (alpha * alpha);
    symmetrize(&mut sigma);
    if sigma.clone().cholesky().is_none() {
        return Ok(None);
    }
    let mut probe = Repair {
        used: true,
        warning: None,
    };
    let (m, s) = match em_map(groups, &mu, &sigma, n, &mut probe, it) {
        Ok(v) => v,
        Err(_) => return Ok(None),
    };
    match observed_loglik(groups, &m, &s) {
        Ok(ll) if ll.is_finite() => Ok(Some((m, s, ll))),
        _ => Ok(None),
    }
}

/// What EM does when a covariance iterate leaves the positive-definite cone after the ridge repair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    #[default]
    Fail,
    /// Return the last positive-definite iterate, marked unconverged, with a warning.
    StopAtLastIterate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Relative loglik change that ends the iteration.
    pub tol: f64,
    pub max_iters: usize,
    pub boundary: BoundaryPolicy,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_EM_TOL,
            max_iters: DEFAULT_EM_MAX_ITERS,
            boundary: BoundaryPolicy::Fail,
        }
    }
}

impl EmOptions {
    fn new(tol: f64, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            boundary: BoundaryPolicy::Fail,
        }
    }
}

/// Maximum-likelihood `(mu, Sigma)` of a multivariate normal from incomplete rows.
pub fn em_mvn(data: &ObservedDataset, tol: f64, max_iters: usize) -> Result<EstimationResult> {
    em_mvn_with(data, &EmOptions::new(tol, max_iters))
}

pub fn em_mvn_with(data: &ObservedDataset, opts: &EmOptions) -> Result<EstimationResult> {
    let (tol, max_iters) = (opts.tol, opts.max_iters);
    let k = data.k();
    let (groups, dropped) = group_rows(data);
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("{dropped} rows without observed items dropped"));
    }
    for j in 0..k {
        if data.observed_count(j) == 0 {
            return Err(SqdError::Estimation(format!("item {j} is never observed")));
        }
    }
    let n: f64 = groups.iter().map(|g| g.n).sum();
    let mut mu = DVector::zeros(k);
    let mut sigma = DMatrix::zeros(k, k);
    for j in 0..k {
        let col: Vec<f64> = (0..data.n()).filter_map(|i| data.get(i, j)).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let v = col.iter().map(|y| (y - m).powi(2)).sum::<f64>() / col.len() as f64;
        mu[j] = m;
        sigma[(j, j)] = if v > 0.0 { v } else { 1.0 };
    }
    let complete = groups.iter().all(|g| g.mis.is_empty());
    let mut ll_prev = observed_loglik(&groups, &mu, &sigma)?;
    let mut trace = vec![ll_prev];
    let mut repair = Repair::default();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        let step = (|| {
            let (m1, s1) = em_map(&groups, &mu, &sigma, n, &mut repair, it)?;
            if complete {
                let ll = observed_loglik(&groups, &m1, &s1)?;
                return Ok((m1, s1, ll));
            }
            let (m2, s2) = em_map(&groups, &m1, &s1, n, &mut repair, it)?;
            let ll2 = observed_loglik(&groups, &m2, &s2)?;
            Ok(match squarem_candidate(&groups, (&mu, &sigma), (&m1, &s1), (&m2, &s2), n, it)? {
                Some((m3, s3, ll3)) if ll3 >= ll2 => (m3, s3, ll3),
                _ => (m2, s2, ll2),
            })
        })();
        let (next_mu, next_sigma, ll) = match step {
            Ok(v) => v,
            Err(SqdError::NotPositiveDefinite(msg)) if opts.boundary == BoundaryPolicy::StopAtLastIterate => {
                warnings.push(format!("{msg}; stopped at the last positive-definite iterate"));
                break;
            }
            Err(e) => return Err(e),
        };
        mu = next_mu;
        sigma = next_sigma;
        trace.push(ll);
        let change = (ll - ll_prev).abs() / ll_prev.abs().max(1e-300);
        ll_prev = ll;
        if complete || change < tol {
            converged = true;
            break;
        }
    }
    warnings.extend(repair.warning);
    if !converged && iterations == max_iters {
        warnings.push(format!("EM unconverged after {max_iters} iterations"));
    }
    Ok(EstimationResult {
        mu_hat: mu,
        sigma_hat: sigma,
        lambda_hat: None,
        eta_hat: None,
        eta_hat_literal: None,
        loglik_trace: trace,
        converged,
        iterations,
        undefined_items: Vec::new(),
        warnings,
    })
}

/// Nonzero rates per item, then EM on the logs of the nonzero responses with zeros
/// treated as missing.
pub fn estimate_zmvln(data: &ObservedDataset, tol: f64, max_iters: usize) -> Result<EstimationResult> {
    estimate_zmvln_with(data, &EmOptions::new(tol, max_iters))
}

pub fn estimate_zmvln_with(data: &ObservedDataset, opts: &EmOptions) -> Result<EstimationResult> {
    let (n, k) = (data.n(), data.k());
    let mut lambda = DVector::zeros(k);
    let mut defined = Vec::new();
    let mut undefined = Vec::new();
    for j in 0..k {
        let mut obs = 0usize;
        let mut nz = 0usize;
        for i in 0..n {
            if let Some(y) = data.get(i, j) {
                if y < 0.0 {
                    return Err(SqdError::InvalidArgument(format!(
                        "negative response {y} at row {i}, item {j}"
                    )));
                }
                obs += 1;
                if y != 0.0 {
                    nz += 1;
                }
            }
        }
        if obs == 0 {
            return Err(SqdError::Estimation(format!("item {j} is never observed")));
        }
        lambda[j] = nz as f64 / obs as f64;
        if nz > 0 {
            defined.push(j);
        } else {
            undefined.push(j);
        }
    }
    let d = defined.len();
    let logs = DMatrix::from_fn(n, d, |i, c| {
        let y = data.values[(i, defined[c])];
        if data.is_observed(i, defined[c]) && y > 0.0 {
            y.ln()
        } else {
            0.0
        }
    });
    let mask = (0..n)
        .flat_map(|i| defined.iter().map(move |&j| (i, j)))
        .map(|(i, j)| data.is_observed(i, j) && data.values[(i, j)] > 0.0)
        .collect();
    let mut inner = if d > 0 {
        let mut r = em_mvn_with(&ObservedDataset::new(logs, mask)?, opts)?;
        r.warnings.retain(|w| !w.contains("rows without observed items"));
        r
    } else {
        EstimationResult {
            mu_hat: DVector::zeros(0),
            sigma_hat: DMatrix::zeros(0, 0),
            lambda_hat: None,
            eta_hat: None,
            eta_hat_literal: None,
            loglik_trace: Vec::new(),
            converged: true,
            iterations: 0,
            undefined_items: Vec::new(),
            warnings: Vec::new(),
        }
    };
    let mut mu = DVector::from_element(k, f64::NAN);
    let mut sigma = DMatrix::from_element(k, k, f64::NAN);
    for (a, &i) in defined.iter().enumerate() {
        mu[i] = inner.mu_hat[a];
        for (b, &j) in defined.iter().enumerate() {
            sigma[(i, j)] = inner.sigma_hat[(a, b)];
        }
    }
    let eta = DVector::from_fn(k, |j, _| {
        if lambda[j] > 0.0 {
            lambda[j] * (mu[j] + 0.5 * sigma[(j, j)]).exp()
        } else {
            0.0
        }
    });
    let eta_literal = DVector::from_fn(k, |j, _| if lambda[j] > 0.0 { lambda[j] * mu[j] } else { 0.0 });
    if !undefined.is_empty() {
        inner
            .warnings
            .push(format!("items {undefined:?} have no nonzero observation"));
    }
    Ok(EstimationResult {
        mu_hat: mu,
        sigma_hat: sigma,
        lambda_hat: Some(lambda),
        eta_hat: Some(eta),
        eta_hat_literal: Some(eta_literal),
        undefined_items: undefined,
        ..inner
    })
}

/// Conditional-normal fill-in of the unobserved cells, one completed matrix per draw.
pub fn conditional_impute(
    data: &ObservedDataset,
    params: &MvnParams,
    draws: usize,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    let (n, k) = (data.n(), data.k());
    if params.k() != k {
        return Err(SqdError::DimensionMismatch(format!(
            "parameters have K = {} but data has {k} columns",
            params.k()
        )));
    }
    struct Plan {
        obs: Vec<usize>,
        mis: Vec<usize>,
        bmat: DMatrix<f64>,
        chol: DMatrix<f64>,
    }
    let sigma = params.sigma();
    let mu = params.mu();
    let mut plans: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut plan_list: Vec<Plan> = Vec::new();
    let mut row_plan = Vec::with_capacity(n);
    for i in 0..n {
        let obs = data.observed_items(i);
        let idx = match plans.get(&obs) {
            Some(&p) => p,
            None => {
                let mis: Vec<usize> = (0..k).filter(|j| !obs.contains(j)).collect();
                let (bmat, cond) = if obs.is_empty() {
                    (DMatrix::zeros(mis.len(), 0), sigma.clone())
                } else {
                    let s_uo = DMatrix::from_fn(mis.len(), obs.len(), |a, b| sigma[(mis[a], obs[b])]);
                    let inv = spd_inverse(&submatrix(sigma, &obs))
                        .ok_or_else(|| SqdError::NotPositiveDefinite("observed sub-covariance".into()))?;
                    let bmat = &s_uo * inv;
                    let mut cond = submatrix(sigma, &mis) - &bmat * s_uo.transpose();
                    symmetrize(&mut cond);
                    (bmat, cond)
                };
                let chol = if mis.is_empty() {
                    DMatrix::zeros(0, 0)
                } else {
                    cond.cholesky()
                        .ok_or_else(|| SqdError::NotPositiveDefinite("conditional covariance".into()))?
                        .unpack()
                };
                plan_list.push(Plan { obs: obs.clone(), mis, bmat, chol });
                plans.insert(obs, plan_list.len() - 1);
                plan_list.len() - 1
            }
        };
        row_plan.push(idx);
    }
    let mut out = Vec::with_capacity(draws);
    for d in 0..draws {
        let mut rng = stream_rng(seed, "conditional-impute", d as u64);
        let mut filled = data.values.clone();
        for i in 0..n {
            let plan = &plan_list[row_plan[i]];
            if plan.mis.is_empty() {
                continue;
            }
            let y_o = DVector::from_iterator(plan.obs.len(), plan.obs.iter().map(|&j| data.values[(i, j)]));
            let mean = subvector(mu, &plan.mis) + &plan.bmat * (y_o - subvector(mu, &plan.obs));
            let z = DVector::from_fn(plan.mis.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = mean + &plan.chol * z;
            for (a, &j) in plan.mis.iter().enumerate() {
                filled[(i, j)] = x[a];
            }
        }
        out.push(filled);
    }
    Ok(out)
}

/// Mean over completed matrices of their column means.
pub fn imputation_mean(completed: &[DMatrix<f64>]) -> DVector<f64> {
    let k = completed.first().map_or(0, |m| m.ncols());
    let mut acc = DVector::zeros(k);
    for m in completed {
        let n = m.nrows() as f64;
        for j in 0..k {
            acc[j] += m.column(j).sum() / n;
        }
    }
    acc / completed.len().max(1) as f64
}
