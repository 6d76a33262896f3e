//! Pilot data to design: estimate, optimize, report.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::criterion::{ModelKind, ModelParams};
use crate::error::{Result, SqdError};
use crate::estimation::{
    em_mvn, estimate_zmvln, EstimationResult, ObservedDataset, DEFAULT_EM_MAX_ITERS, DEFAULT_EM_TOL,
};
use crate::mvn::{mu_fisher, MvnParams};
use crate::optimizer::{optimize, CriterionSpec, OptimizeResult, OptimizerOptions};
use crate::pattern::{enumerate_patterns, srs_design, DesignDistribution, PatternSet};
use crate::prior::{with_sigma, InverseWishartPrior};
use crate::rng::stream_rng;
use crate::zmvln::{eta_covariance, ZmvlnParams, LAMBDA_CLAMP};

/// Degrees of freedom of the inverse-Wishart prior centred on the pilot covariance.
pub const DEFAULT_IW_DF: f64 = 4000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "variant")]
pub enum DesignVariant {
    Local,
    /// Prior-averaged criterion over `draws` inverse-Wishart draws.
    Bayes { draws: usize },
    /// Worst case over `Sigma_s = D^1/2 (I + s (R - I)) D^1/2`, `s = 0, step, .., 1`.
    Minimax { step: f64 },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub model: ModelKind,
    pub m: usize,
    pub variant: DesignVariant,
    pub seed: u64,
    pub iw_df: f64,
    pub optimizer: OptimizerOptions,
}

impl PipelineConfig {
    pub fn new(model: ModelKind, m: usize, variant: DesignVariant, seed: u64) -> Self {
        Self {
            model,
            m,
            variant,
            seed,
            iw_df: DEFAULT_IW_DF,
            optimizer: OptimizerOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub estimation: EstimationResult,
    pub params: ModelParams,
    pub result: OptimizeResult,
    /// Local criterion at the estimated parameters.
    pub criterion_srs: f64,
    pub criterion_opt: f64,
    pub re_a: f64,
    pub warnings: Vec<String>,
}

pub fn estimate(model: ModelKind, data: &ObservedDataset) -> Result<EstimationResult> {
    match model {
        ModelKind::Mvn => em_mvn(data, DEFAULT_EM_TOL, DEFAULT_EM_MAX_ITERS),
        ModelKind::Zmvln => estimate_zmvln(data, DEFAULT_EM_TOL, DEFAULT_EM_MAX_ITERS),
    }
}

/// Model parameters from estimates; nonzero rates are clamped into the open unit interval.
pub fn params_from_estimate(model: ModelKind, est: &EstimationResult) -> Result<ModelParams> {
    Ok(match model {
        ModelKind::Mvn => ModelParams::Mvn(MvnParams::new(est.mu_hat.clone(), est.sigma_hat.clone())?),
        ModelKind::Zmvln => {
            let lambda = est
                .lambda_hat
                .as_ref()
                .ok_or_else(|| SqdError::Estimation("zero-inflated fit without nonzero rates".into()))?
                .map(|l| l.clamp(LAMBDA_CLAMP, 1.0 - LAMBDA_CLAMP));
            ModelParams::Zmvln(ZmvlnParams::new(lambda, est.mu_hat.clone(), est.sigma_hat.clone())?)
        }
    })
}

fn sigma_of(p: &ModelParams) -> &DMatrix<f64> {
    match p {
        ModelParams::Mvn(p) => p.sigma(),
        ModelParams::Zmvln(p) => p.sigma(),
    }
}

/// Correlation-shrinkage family around `base`.
pub fn shrinkage_set(base: &ModelParams, step: f64) -> Result<Vec<ModelParams>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(SqdError::InvalidArgument(format!("grid step {step} outside (0, 1]")));
    }
    let sigma = sigma_of(base);
    let k = sigma.nrows();
    let steps = (1.0 / step).round() as usize;
    (0..=steps)
        .map(|i| {
            let s = (i as f64 * step).min(1.0);
            let shrunk = DMatrix::from_fn(k, k, |a, b| {
                if a == b {
                    sigma[(a, a)]
                } else {
                    s * sigma[(a, b)]
                }
            });
            with_sigma(base, shrunk)
        })
        .collect()
}

/// Builds the criterion for the requested variant around `params`.
pub fn criterion_spec(params: &ModelParams, config: &PipelineConfig) -> Result<CriterionSpec> {
    match config.variant {
        DesignVariant::Local => Ok(CriterionSpec::point(params.clone())),
        DesignVariant::Bayes { draws } => {
            let prior = InverseWishartPrior::centered(params.clone(), config.iw_df)?;
            CriterionSpec::bayes(params.kind(), Arc::new(prior), draws)
        }
        DesignVariant::Minimax { step } => CriterionSpec::minimax(shrinkage_set(params, step)?),
    }
}

/// Estimates parameters from `pilot` and optimizes the design.
pub fn design_from_pilot(pilot: &ObservedDataset, config: &PipelineConfig) -> Result<PipelineReport> {
    let ps = Arc::new(enumerate_patterns(pilot.k(), config.m)?);
    let estimation = estimate(config.model, pilot)?;
    let params = params_from_estimate(config.model, &estimation)?;
    let spec = criterion_spec(&params, config)?;
    let result = optimize(&spec, ps.clone(), &config.optimizer, config.seed)?;
    let local = params.criterion(ps.clone())?;
    let srs = srs_design(ps)?;
    let criterion_srs = local.value(srs.probs())?;
    let criterion_opt = local.value(result.design.probs())?;
    let mut warnings = estimation.warnings.clone();
    warnings.extend(result.warnings.iter().cloned());
    Ok(PipelineReport {
        re_a: criterion_srs / criterion_opt,
        estimation,
        params,
        result,
        criterion_srs,
        criterion_opt,
        warnings,
    })
}

/// Splits rows at random into a pilot part of `n_first` rows and the remainder.
pub fn split_rows(data: &ObservedDataset, n_first: usize, seed: u64) -> Result<(ObservedDataset, ObservedDataset)> {
    if n_first == 0 || n_first >= data.n() {
        return Err(SqdError::InvalidArgument(format!(
            "split size {n_first} must lie in 1..{}",
            data.n()
        )));
    }
    let mut rng = stream_rng(seed, "split-rows", 0);
    let mut idx = rand::seq::index::sample(&mut rng, data.n(), data.n()).into_vec();
    let rest = idx.split_off(n_first);
    idx.sort_unstable();
    let mut rest = rest;
    rest.sort_unstable();
    Ok((data.select_rows(&idx), data.select_rows(&rest)))
}

/// Asymptotic variance of each item-mean estimator under design `d`, per respondent.
pub fn item_variances(params: &ModelParams, d: &DesignDistribution) -> Result<Vec<f64>> {
    match params {
        ModelParams::Mvn(p) => {
            let m = mu_fisher(p, d)?;
            let inv = crate::linalg::spd_inverse(&m).ok_or(SqdError::SingularInformation { rcond: 0.0 })?;
            Ok(inv.diagonal().iter().copied().collect())
        }
        ModelParams::Zmvln(p) => Ok(eta_covariance(p, d)?.diagonal().iter().copied().collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub model: ModelKind,
    pub criterion: f64,
    pub item_inclusion: Vec<f64>,
    pub item_variances: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Criterion, item inclusions and item-level variances of `d` at `params`.
pub fn evaluate_design(params: &ModelParams, d: &DesignDistribution) -> Result<EvaluationReport> {
    if params.k() != d.k() {
        return Err(SqdError::DimensionMismatch(format!(
            "design has K = {} but parameters have K = {}",
            d.k(),
            params.k()
        )));
    }
    let inclusion = d.item_inclusion();
    if let Some(item) = inclusion.iter().position(|&p| p <= 0.0) {
        return Err(SqdError::UncoveredItem { item });
    }
    let ps: Arc<PatternSet> = d.shared_pattern_set();
    let crit = params.criterion(ps)?;
    Ok(EvaluationReport {
        model: params.kind(),
        criterion: crit.value(d.probs())?,
        item_inclusion: inclusion,
        item_variances: item_variances(params, d)?,
        warnings: crit.warnings(),
    })
}
