//! Minimization of A-criteria over the probability simplex of a pattern set.
//!
//! All three variants share one spectral projected-gradient loop with Armijo
//! backtracking on the set `{p : p_j >= floor, sum p = 1}`, started at SRS.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{DesignCriterion, ModelKind, ModelParams};
use crate::error::{Result, SqdError};
use crate::linalg::compensated_sum;
use crate::pattern::{DesignDistribution, PatternOrbits, PatternSet};
use crate::prior::PriorSampler;
use crate::rng::stream_rng;

/// Stationarity tolerance of the Frank-Wolfe gap, relative to the criterion.
pub const STATIONARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Barzilai-Borwein trial step, then Armijo backtracking.
    #[default]
    SpectralArmijo,
    /// Trial step `1 / max |g_j - g_mean|` every iteration, then Armijo backtracking.
    Armijo,
}

#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub floor: f64,
    pub step_rule: StepRule,
    /// When set, the final iterate is averaged over these orbits.
    pub symmetry: Option<PatternOrbits>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_tol: 1e-10,
            floor: 1e-12,
            step_rule: StepRule::default(),
            symmetry: None,
        }
    }
}

impl OptimizerOptions {
    fn validate(&self, j: usize) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(SqdError::InvalidArgument("rel_tol must be positive".into()));
        }
        if !(self.floor >= 0.0) || self.floor * j as f64 >= 1.0 {
            return Err(SqdError::InvalidArgument(format!(
                "floor {} infeasible for {j} patterns",
                self.floor
            )));
        }
        Ok(())
    }
}

/// Where the criterion's parameters come from.
#[derive(Clone)]
pub enum ParamSource {
    Point(ModelParams),
    Prior {
        prior: Arc<dyn PriorSampler>,
        draws: usize,
    },
    WorstCase(Vec<ModelParams>),
}

#[derive(Clone)]
pub struct CriterionSpec {
    pub model: ModelKind,
    pub source: ParamSource,
}

impl CriterionSpec {
    pub fn point(params: ModelParams) -> Self {
        Self {
            model: params.kind(),
            source: ParamSource::Point(params),
        }
    }

    pub fn bayes(model: ModelKind, prior: Arc<dyn PriorSampler>, draws: usize) -> Result<Self> {
        if draws == 0 {
            return Err(SqdError::InvalidArgument("Bayes designs need at least one draw".into()));
        }
        Ok(Self {
            model,
            source: ParamSource::Prior { prior, draws },
        })
    }

    pub fn minimax(set: Vec<ModelParams>) -> Result<Self> {
        let first = set
            .first()
            .ok_or_else(|| SqdError::InvalidArgument("worst-case set is empty".into()))?;
        let model = first.kind();
        if set.iter().any(|p| p.kind() != model || p.k() != first.k()) {
            return Err(SqdError::InvalidArgument(
                "worst-case set mixes models or dimensions".into(),
            ));
        }
        Ok(Self {
            model,
            source: ParamSource::WorstCase(set),
        })
    }
}

/// Optimizer output.
#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub design: DesignDistribution,
    /// Local criterion, prior-averaged criterion or worst-case criterion.
    pub value: f64,
    /// The same objective at SRS.
    pub srs_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `g'p - min_j g_j` at the returned design.
    pub stationarity_gap: f64,
    pub trace: Vec<f64>,
    /// Index of the maximizing member (minimax only).
    pub worst_index: Option<usize>,
    /// Prior draws rejected because the criterion was undefined at SRS.
    pub rejected_draws: usize,
    pub warnings: Vec<String>,
}

type Objective<'a> = dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync + 'a;

/// Euclidean projection onto `{x : x_j >= floor, sum x = 1}`.
pub fn project_floored_simplex(y: &[f64], floor: f64) -> Vec<f64> {
    let n = y.len();
    let mass = 1.0 - floor * n as f64;
    let mut sorted: Vec<f64> = y.iter().map(|v| v - floor).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - mass) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    let mut x: Vec<f64> = y.iter().map(|v| (v - floor - theta).max(0.0) + floor).collect();
    let total = compensated_sum(x.iter().copied());
    let excess = total - 1.0;
    if excess != 0.0 {
        // put the rounding residue on the largest coordinate
        let (imax, _) = x
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        x[imax] -= excess;
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

fn fw_gap(x: &[f64], g: &[f64]) -> f64 {
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    dot(g, x) - min
}

struct SpgOutcome {
    x: Vec<f64>,
    f: f64,
    gap: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn spg(obj: &Objective<'_>, x0: Vec<f64>, opts: &OptimizerOptions) -> Result<SpgOutcome> {
    let mut x = project_floored_simplex(&x0, opts.floor);
    let (mut f, mut g) = obj(&x)?;
    if !f.is_finite() {
        return Err(SqdError::InvalidArgument("criterion is not finite at the start".into()));
    }
    let initial_step = |g: &[f64]| {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let spread = g.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        if spread > 0.0 {
            1.0 / spread
        } else {
            1.0
        }
    };
    let mut alpha = initial_step(&g);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let mut gap = fw_gap(&x, &g);
    for it in 0..opts.max_iters {
        if gap <= 1e-14 * f.abs() {
            converged = true;
            break;
        }
        if opts.step_rule == StepRule::Armijo {
            alpha = initial_step(&g);
        }
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
        let proj = project_floored_simplex(&trial, opts.floor);
        let d: Vec<f64> = proj.iter().zip(&x).map(|(p, xi)| p - xi).collect();
        let gd = dot(&g, &d);
        if !(gd < 0.0) {
            converged = gap <= STATIONARITY_TOL * f.abs();
            break;
        }
        let mut lam = 1.0;
        let accepted = loop {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + lam * di).collect();
            let xt = project_floored_simplex(&xt, opts.floor);
            if let Ok((ft, gt)) = obj(&xt) {
                if ft.is_finite() && ft <= f + 1e-4 * lam * gd {
                    break Some((xt, ft, gt));
                }
            }
            lam *= 0.5;
            if lam < 1e-20 {
                break None;
            }
        };
        iterations = it + 1;
        let Some((xn, fnew, gnew)) = accepted else {
            converged = gap <= STATIONARITY_TOL * f.abs();
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let ss = dot(&s, &s);
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-30, 1e30) } else { 1e30f64.min(alpha * 10.0) };
        let rel = (f - fnew) / f.abs().max(f64::MIN_POSITIVE);
        x = xn;
        f = fnew;
        g = gnew;
        gap = fw_gap(&x, &g);
        trace.push(f);
        if rel < opts.rel_tol && gap <= STATIONARITY_TOL * f.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        converged = gap <= 1e-14 * f.abs();
    }
    Ok(SpgOutcome {
        x,
        f,
        gap,
        iterations,
        converged,
        trace,
    })
}

fn uniform(j: usize) -> Vec<f64> {
    vec![1.0 / j as f64; j]
}

fn finish(
    obj: &Objective<'_>,
    out: SpgOutcome,
    ps: &Arc<PatternSet>,
    opts: &OptimizerOptions,
    srs_value: f64,
) -> Result<OptimizeResult> {
    let (x, value, gap) = match &opts.symmetry {
        Some(orbits) => {
            let xa = orbits.average(&out.x);
            let (fa, ga) = obj(&xa)?;
            if fa <= out.f * (1.0 + 1e-12) {
                let gap = fw_gap(&xa, &ga);
                (xa, fa, gap)
            } else {
                (out.x, out.f, out.gap)
            }
        }
        None => (out.x, out.f, out.gap),
    };
    let mut warnings = Vec::new();
    if !out.converged {
        warnings.push(format!(
            "unconverged after {} iterations (stationarity gap {gap:.3e})",
            out.iterations
        ));
    }
    Ok(OptimizeResult {
        design: DesignDistribution::from_weights(ps.clone(), x)?,
        value,
        srs_value,
        iterations: out.iterations,
        converged: out.converged,
        stationarity_gap: gap,
        trace: out.trace,
        worst_index: None,
        rejected_draws: 0,
        warnings,
    })
}

fn criterion_warnings(crits: &[Box<dyn DesignCriterion>]) -> Vec<String> {
    let mut w: Vec<String> = crits.iter().flat_map(|c| c.warnings()).collect();
    w.sort();
    w.dedup();
    w
}

/// Locally optimal design at a point value of the parameters.
pub fn optimize_local(
    spec: &CriterionSpec,
    ps: Arc<PatternSet>,
    opts: &OptimizerOptions,
) -> Result<OptimizeResult> {
    let ParamSource::Point(params) = &spec.source else {
        return Err(SqdError::InvalidArgument(
            "local designs need a point parameter value".into(),
        ));
    };
    opts.validate(ps.len())?;
    let crit = params.criterion(ps.clone())?;
    let obj = |p: &[f64]| crit.value_and_gradient(p);
    let x0 = uniform(ps.len());
    let srs_value = crit.value(&x0)?;
    let out = spg(&obj, x0, opts)?;
    let mut res = finish(&obj, out, &ps, opts, srs_value)?;
    res.warnings.extend(crit.warnings());
    Ok(res)
}

fn average_objective(
    crits: &[Box<dyn DesignCriterion>],
    p: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let parts = crits
        .par_iter()
        .map(|c| c.value_and_gradient(p))
        .collect::<Result<Vec<_>>>()?;
    let s = parts.len() as f64;
    let value = compensated_sum(parts.iter().map(|(v, _)| *v)) / s;
    let grad = (0..p.len())
        .map(|j| compensated_sum(parts.iter().map(|(_, g)| g[j])) / s)
        .collect();
    Ok((value, grad))
}

/// Bayes design minimizing the sample average of the criterion over `draws` fixed
/// prior draws.
pub fn optimize_bayes(
    spec: &CriterionSpec,
    ps: Arc<PatternSet>,
    opts: &OptimizerOptions,
    seed: u64,
) -> Result<OptimizeResult> {
    let ParamSource::Prior { prior, draws } = &spec.source else {
        return Err(SqdError::InvalidArgument("Bayes designs need a prior".into()));
    };
    opts.validate(ps.len())?;
    let x0 = uniform(ps.len());
    let max_attempts = 10 * draws + 100;
    let mut crits: Vec<Box<dyn DesignCriterion>> = Vec::with_capacity(*draws);
    let mut rejected = 0;
    let mut attempt = 0u64;
    while crits.len() < *draws {
        if attempt as usize >= max_attempts {
            return Err(SqdError::InvalidArgument(format!(
                "only {} of {draws} prior draws gave a finite criterion",
                crits.len()
            )));
        }
        let mut rng = stream_rng(seed, "bayes-draw", attempt);
        attempt += 1;
        let accepted = prior
            .sample(&mut rng)
            .and_then(|p| {
                if p.kind() != spec.model {
                    return Err(SqdError::InvalidArgument("prior draw has the wrong model".into()));
                }
                p.criterion(ps.clone())
            })
            .and_then(|c| c.value(&x0).map(|v| (c, v)));
        match accepted {
            Ok((c, v)) if v.is_finite() => crits.push(c),
            _ => rejected += 1,
        }
    }
    let obj = |p: &[f64]| average_objective(&crits, p);
    let srs_value = obj(&x0)?.0;
    let out = spg(&obj, x0, opts)?;
    let mut res = finish(&obj, out, &ps, opts, srs_value)?;
    res.rejected_draws = rejected;
    if rejected > 0 {
        res.warnings
            .push(format!("{rejected} prior draws rejected (criterion undefined at SRS)"));
    }
    res.warnings.extend(criterion_warnings(&crits));
    Ok(res)
}

fn all_values(crits: &[Box<dyn DesignCriterion>], p: &[f64]) -> Result<Vec<f64>> {
    crits.par_iter().map(|c| c.value(p)).collect()
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .cloned()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc })
}

/// Minimax design over a finite parameter set.
///
/// The worst case is smoothed by log-sum-exp with a temperature raised in stages;
/// the returned design is the best visited stage end by the exact worst case.
pub fn optimize_minimax(
    spec: &CriterionSpec,
    ps: Arc<PatternSet>,
    opts: &OptimizerOptions,
) -> Result<OptimizeResult> {
    let ParamSource::WorstCase(set) = &spec.source else {
        return Err(SqdError::InvalidArgument("minimax designs need a parameter set".into()));
    };
    opts.validate(ps.len())?;
    if set.len() == 1 {
        let mut res = optimize_local(&CriterionSpec::point(set[0].clone()), ps, opts)?;
        res.worst_index = Some(0);
        return Ok(res);
    }
    let crits = set
        .iter()
        .map(|p| p.criterion(ps.clone()))
        .collect::<Result<Vec<_>>>()?;
    let x0 = uniform(ps.len());
    let v0 = all_values(&crits, &x0)?;
    let (mut best_idx, srs_value) = argmax(&v0);
    let mut best_x = x0.clone();
    let mut best_val = srs_value;
    let mut x = x0;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut converged = false;
    for beta in [1e1, 1e2, 1e3, 1e4, 1e5, 1e6] {
        let t = beta / srs_value;
        let obj = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
            let parts = crits
                .par_iter()
                .map(|c| c.value_and_gradient(p))
                .collect::<Result<Vec<_>>>()?;
            let vmax = parts.iter().map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = parts.iter().map(|(v, _)| (t * (v - vmax)).exp()).collect();
            let z = compensated_sum(w.iter().copied());
            let value = vmax + z.ln() / t;
            let grad = (0..p.len())
                .map(|j| compensated_sum(parts.iter().zip(&w).map(|((_, g), wi)| wi * g[j])) / z)
                .collect();
            Ok((value, grad))
        };
        let out = spg(&obj, x.clone(), opts)?;
        iterations += out.iterations;
        trace.extend_from_slice(&out.trace);
        converged = out.converged;
        x = out.x;
        let vals = all_values(&crits, &x)?;
        let (i, v) = argmax(&vals);
        if v < best_val {
            best_val = v;
            best_idx = i;
            best_x = x.clone();
        }
    }
    if let Some(orbits) = &opts.symmetry {
        let xa = orbits.average(&best_x);
        let vals = all_values(&crits, &xa)?;
        let (i, v) = argmax(&vals);
        if v <= best_val * (1.0 + 1e-12) {
            best_val = v;
            best_idx = i;
            best_x = xa;
        }
    }
    let mut warnings = criterion_warnings(&crits);
    if !converged {
        warnings.push(format!("unconverged after {iterations} iterations"));
    }
    Ok(OptimizeResult {
        design: DesignDistribution::from_weights(ps, best_x)?,
        value: best_val,
        srs_value,
        iterations,
        converged,
        stationarity_gap: f64::NAN,
        trace,
        worst_index: Some(best_idx),
        rejected_draws: 0,
        warnings,
    })
}

/// Dispatches on the parameter source.
pub fn optimize(
    spec: &CriterionSpec,
    ps: Arc<PatternSet>,
    opts: &OptimizerOptions,
    seed: u64,
) -> Result<OptimizeResult> {
    match spec.source {
        ParamSource::Point(_) => optimize_local(spec, ps, opts),
        ParamSource::Prior { .. } => optimize_bayes(spec, ps, opts, seed),
        ParamSource::WorstCase(_) => optimize_minimax(spec, ps, opts),
    }
}
