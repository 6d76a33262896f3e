//! Monte-Carlo study harness: structured populations, design application,
//! estimation and relative-efficiency summaries.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{ModelKind, ModelParams};
use crate::error::{Result, SqdError};
use crate::estimation::{
    conditional_impute, em_mvn_with, estimate_zmvln_with, imputation_mean, BoundaryPolicy, EmOptions,
    EstimationResult, ObservedDataset, DEFAULT_EM_MAX_ITERS, DEFAULT_EM_TOL,
};
use crate::linalg::{compensated_sum, CompensatedSum};
use crate::mvn::MvnParams;
use crate::optimizer::{
    optimize_bayes, optimize_local, optimize_minimax, CriterionSpec, OptimizerOptions,
};
use crate::pattern::{enumerate_patterns, srs_design, DesignDistribution, PatternOrbits, PatternSet};
use crate::prior::{block_mean, with_sigma, UniformBlockPrior};
use crate::rng::stream_rng;
use crate::zmvln::{sample_with, ZmvlnParams};

/// Unit-variance covariance of `g` groups of `q` items: `rho1` within groups,
/// `rho2` between groups.
pub fn block_sigma(g: usize, q: usize, rho1: f64, rho2: f64) -> Result<DMatrix<f64>> {
    if g == 0 || q == 0 {
        return Err(SqdError::InvalidArgument(format!("g = {g} and q = {q} must be positive")));
    }
    let k = g * q;
    let sigma = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else if i / q == j / q {
            rho1
        } else {
            rho2
        }
    });
    if sigma.clone().cholesky().is_none() {
        return Err(SqdError::NotPositiveDefinite(format!(
            "block covariance with g = {g}, q = {q}, rho1 = {rho1}, rho2 = {rho2}"
        )));
    }
    Ok(sigma)
}

/// A finite population from the block-structured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPopSpec {
    pub g: usize,
    pub q: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub model: ModelKind,
    /// Nonzero probability per group (ZMVLN only).
    #[serde(default)]
    pub lambda_profile: Vec<f64>,
    #[serde(rename = "N")]
    pub population_size: usize,
}

impl StructuredPopSpec {
    pub fn k(&self) -> usize {
        self.g * self.q
    }

    pub fn mu(&self) -> DVector<f64> {
        block_mean(self.g, self.q)
    }

    pub fn sigma(&self) -> Result<DMatrix<f64>> {
        block_sigma(self.g, self.q, self.rho1, self.rho2)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let sigma = self.sigma()?;
        Ok(match self.model {
            ModelKind::Mvn => ModelParams::Mvn(MvnParams::new(self.mu(), sigma)?),
            ModelKind::Zmvln => {
                if self.lambda_profile.len() != self.g {
                    return Err(SqdError::InvalidArgument(format!(
                        "lambda profile has {} entries for {} groups",
                        self.lambda_profile.len(),
                        self.g
                    )));
                }
                let lambda = DVector::from_fn(self.k(), |i, _| self.lambda_profile[i / self.q]);
                ModelParams::Zmvln(ZmvlnParams::new(lambda, self.mu(), sigma)?)
            }
        })
    }

    /// Symmetries of the criterion at the true parameters.
    pub fn orbits(&self, ps: &PatternSet) -> Result<PatternOrbits> {
        match self.model {
            ModelKind::Mvn => PatternOrbits::exchangeable_groups(ps, self.g, self.q),
            ModelKind::Zmvln => PatternOrbits::within_groups(ps, self.g, self.q),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DesignKind {
    Srs,
    Opt,
    Bayes,
    Minimax,
    Det1,
    Det2,
    Full,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Srs => "SRS",
            DesignKind::Opt => "OPT",
            DesignKind::Bayes => "BAYES",
            DesignKind::Minimax => "MINIMAX",
            DesignKind::Det1 => "DET1",
            DesignKind::Det2 => "DET2",
            DesignKind::Full => "FULL",
        }
    }

    fn is_random(self) -> bool {
        matches!(self, DesignKind::Srs | DesignKind::Opt | DesignKind::Bayes | DesignKind::Minimax)
    }
}

/// Earlier survey used to plan the current one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSpec {
    pub n: usize,
    /// The first half of the items is shifted by `-shift`, the rest by `+shift`.
    #[serde(default)]
    pub shift: f64,
}

fn default_m() -> usize {
    2
}
fn default_det_full() -> usize {
    50
}
fn default_full_n() -> usize {
    100
}
fn default_imputations() -> usize {
    5
}
fn default_bayes_draws() -> usize {
    200
}
fn default_minimax_step() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub label: String,
    pub pop: StructuredPopSpec,
    /// Respondents per replicate for SRS, OPT, BAYES and MINIMAX.
    pub n: usize,
    pub designs: Vec<DesignKind>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_m")]
    pub m: usize,
    /// When present, OPT and the deterministic designs' imputation model use
    /// estimates from a fully observed pilot sample drawn each replicate.
    #[serde(default)]
    pub pilot: Option<PilotSpec>,
    #[serde(default = "default_det_full")]
    pub det_full_rows: usize,
    /// Partially observed rows of DET1/DET2; defaults to `n / 2`.
    #[serde(default)]
    pub det_partial_rows: Option<usize>,
    #[serde(default = "default_full_n")]
    pub full_n: usize,
    #[serde(default = "default_imputations")]
    pub imputation_draws: usize,
    #[serde(default = "default_bayes_draws")]
    pub bayes_draws: usize,
    #[serde(default = "default_minimax_step")]
    pub minimax_step: f64,
}

/// Scale of a study run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `N <= 100,000`, `R <= 200`, sample sizes halved.
    #[default]
    Desk,
    /// Full scale.
    Paper,
}

impl Scenario {
    pub fn new(pop: StructuredPopSpec, n: usize, designs: Vec<DesignKind>, replications: usize, seed: u64) -> Self {
        Self {
            label: String::new(),
            pop,
            n,
            designs,
            replications,
            seed,
            m: default_m(),
            pilot: None,
            det_full_rows: default_det_full(),
            det_partial_rows: None,
            full_n: default_full_n(),
            imputation_draws: default_imputations(),
            bayes_draws: default_bayes_draws(),
            minimax_step: default_minimax_step(),
        }
    }

    pub fn det_partial(&self) -> usize {
        self.det_partial_rows.unwrap_or(self.n / 2)
    }

    pub fn with_profile(&self, profile: Profile) -> Self {
        let mut s = self.clone();
        if profile == Profile::Desk {
            s.pop.population_size = s.pop.population_size.min(100_000);
            s.replications = s.replications.min(200);
            s.n = (s.n / 2).max(1);
            s.det_full_rows /= 2;
            s.det_partial_rows = Some((self.det_partial() / 2).max(1));
            s.full_n = (s.full_n / 2).max(1);
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let big_n = self.pop.population_size;
        if self.replications == 0 {
            return Err(SqdError::InvalidArgument("replications must be positive".into()));
        }
        if self.designs.is_empty() {
            return Err(SqdError::InvalidArgument("no designs requested".into()));
        }
        let needed = self.max_rows() + self.pilot.as_ref().map_or(0, |p| p.n);
        if needed > big_n || self.n == 0 {
            return Err(SqdError::InvalidArgument(format!(
                "sample sizes ({needed} rows) must be positive and fit in N = {big_n}"
            )));
        }
        if self.m == 0 || self.m > self.pop.k() {
            return Err(SqdError::InvalidArgument(format!(
                "m = {} must lie in 1..={}",
                self.m,
                self.pop.k()
            )));
        }
        let det = self.designs.iter().any(|d| matches!(d, DesignKind::Det1 | DesignKind::Det2));
        if det && self.pop.model != ModelKind::Mvn {
            return Err(SqdError::InvalidArgument(
                "deterministic designs are defined for the MVN model only".into(),
            ));
        }
        if det && self.pilot.is_none() && self.det_full_rows == 0 {
            return Err(SqdError::InvalidArgument(
                "deterministic designs without a pilot need fully observed rows".into(),
            ));
        }
        self.pop.params()?;
        Ok(())
    }

    fn rows_for(&self, d: DesignKind) -> usize {
        match d {
            DesignKind::Full => self.full_n,
            DesignKind::Det1 | DesignKind::Det2 => self.det_full_rows + self.det_partial(),
            _ => self.n,
        }
    }

    fn max_rows(&self) -> usize {
        self.designs.iter().map(|&d| self.rows_for(d)).max().unwrap_or(0)
    }

    /// Named scenarios at full scale.
    ///
    /// `sim1-g{g}-q{q}`, `sim2-p{p2}-g{g}-q{q}-n{n}`, `sim3-setup{1|2}-g{g}-q{q}`,
    /// `sim4-r{rho1}-{rho2}`.
    pub fn preset(name: &str) -> Result<Self> {
        let bad = || SqdError::InvalidArgument(format!("unknown preset {name:?}"));
        let field = |key: &str| -> Result<&str> {
            name.split('-')
                .find_map(|part| part.strip_prefix(key))
                .ok_or_else(bad)
        };
        let int = |key: &str| -> Result<usize> { field(key)?.parse().map_err(|_| bad()) };
        let head = name.split('-').next().unwrap_or("");
        let mvn = |g, q, rho1, rho2, big_n| StructuredPopSpec {
            g,
            q,
            rho1,
            rho2,
            model: ModelKind::Mvn,
            lambda_profile: Vec::new(),
            population_size: big_n,
        };
        let mut sc = match head {
            "sim1" => {
                let (g, q) = (int("g")?, int("q")?);
                Scenario::new(mvn(g, q, 0.8, 0.4, 100_000), 1000, vec![DesignKind::Srs, DesignKind::Opt], 1000, 1)
            }
            "sim2" => {
                let p2: f64 = field("p")?.parse().map_err(|_| bad())?;
                let (g, q, n) = (int("g")?, int("q")?, int("n")?);
                let profile = (0..g).map(|i| if i < g.div_ceil(2) { 0.8 } else { p2 }).collect();
                let pop = StructuredPopSpec {
                    model: ModelKind::Zmvln,
                    lambda_profile: profile,
                    ..mvn(g, q, 0.8, 0.2, 100_000)
                };
                Scenario::new(pop, n, vec![DesignKind::Srs, DesignKind::Opt], 1000, 2)
            }
            "sim3" => {
                let setup = int("setup")?;
                let (g, q) = (int("g")?, int("q")?);
                let k = g * q;
                let designs = vec![
                    DesignKind::Srs,
                    DesignKind::Opt,
                    DesignKind::Det1,
                    DesignKind::Det2,
                    DesignKind::Full,
                ];
                let mut s = Scenario::new(mvn(g, q, 0.8, 0.2, 100_000), 50 * k, designs, 1000, 3);
                match setup {
                    1 => {
                        s.det_full_rows = 50;
                        s.det_partial_rows = Some(25 * k);
                    }
                    2 => {
                        s.det_full_rows = 0;
                        s.det_partial_rows = Some(50 * k);
                        s.pilot = Some(PilotSpec { n: 100, shift: 0.2 });
                    }
                    _ => return Err(bad()),
                }
                s
            }
            "sim4" => {
                let mut parts = name.trim_start_matches("sim4-r").split('-');
                let rho1: f64 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                let rho2: f64 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                let designs = vec![DesignKind::Srs, DesignKind::Opt, DesignKind::Bayes, DesignKind::Minimax];
                Scenario::new(mvn(2, 4, rho1, rho2, 1_000_000), 1000, designs, 1000, 4)
            }
            _ => return Err(bad()),
        };
        sc.label = name.to_string();
        sc.validate()?;
        Ok(sc)
    }
}

/// Per-design summary of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design: DesignKind,
    pub n: usize,
    /// Mean over replicates and items of the squared error.
    pub mse: f64,
    /// Mean over replicates of the item-summed squared error.
    pub mse_total: f64,
    /// `MSE_SRS / MSE_design`.
    pub re_mse: Option<f64>,
    /// Jackknife SE of `re_mse` over replicates.
    pub se_re: Option<f64>,
    /// A-criterion at the true parameters (mean over replicates for pilot designs).
    pub criterion: Option<f64>,
    /// `A_SRS / A_design`.
    pub re_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub label: String,
    pub scenario: Scenario,
    pub replications_ok: usize,
    pub failed_replications: Vec<usize>,
    pub designs: Vec<DesignSummary>,
    pub warnings: Vec<String>,
    /// Item-summed squared errors, `[design][replicate]` over successful replicates.
    #[serde(skip)]
    pub per_replicate: Vec<Vec<f64>>,
}

impl StudyResult {
    pub fn summary(&self, d: DesignKind) -> Option<&DesignSummary> {
        self.designs.iter().find(|s| s.design == d)
    }
}

fn mvn_draws(mu: &DVector<f64>, sigma: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let k = mu.len();
    let l = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| SqdError::NotPositiveDefinite("population covariance".into()))?
        .unpack();
    let mut out = DMatrix::zeros(n, k);
    let mut z = DVector::zeros(k);
    for r in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let x = mu + &l * &z;
        out.row_mut(r).copy_from(&x.transpose());
    }
    Ok(out)
}

/// `N x K` population drawn from the structured model.
pub fn gen_population(spec: &StructuredPopSpec, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = stream_rng(seed, "population", 0);
    match spec.params()? {
        ModelParams::Mvn(p) => mvn_draws(p.mu(), p.sigma(), spec.population_size, &mut rng),
        ModelParams::Zmvln(p) => sample_with(&p, spec.population_size, &mut rng),
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_fn(m.ncols(), |j, _| compensated_sum(m.column(j).iter().copied()) / n)
}

fn draw_patterns(
    population: &DMatrix<f64>,
    rows: &[usize],
    d: &DesignDistribution,
    rng: &mut ChaCha8Rng,
) -> Result<ObservedDataset> {
    let k = population.ncols();
    let sampler = WeightedIndex::new(d.probs())
        .map_err(|e| SqdError::InvalidArgument(format!("design weights: {e}")))?;
    let values = DMatrix::from_fn(rows.len(), k, |r, j| population[(rows[r], j)]);
    let mut mask = vec![false; rows.len() * k];
    for r in 0..rows.len() {
        let p = &d.pattern_set().patterns()[sampler.sample(rng)];
        for &j in p.items() {
            mask[r * k + j] = true;
        }
    }
    ObservedDataset::new(values, mask)
}

/// Draws `n` units by SRS without replacement and one pattern per unit from `d`.
pub fn apply_design(population: &DMatrix<f64>, n: usize, d: &DesignDistribution, seed: u64) -> Result<ObservedDataset> {
    let big_n = population.nrows();
    if n == 0 || n > big_n {
        return Err(SqdError::InvalidArgument(format!("n = {n} must lie in 1..={big_n}")));
    }
    if d.k() != population.ncols() {
        return Err(SqdError::DimensionMismatch(format!(
            "design has K = {} but population has {} columns",
            d.k(),
            population.ncols()
        )));
    }
    let mut rng = stream_rng(seed, "apply-design", 0);
    let rows = sample_indices(&mut rng, big_n, n).into_vec();
    draw_patterns(population, &rows, d, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DetVariant {
    Det1,
    Det2,
}

/// Observation mask of a deterministic question order: `n_full` complete rows then
/// `n - n_full` rows with two fixed items.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub n: usize,
    pub k: usize,
    /// Row-major.
    pub observed: Vec<bool>,
}

/// DET1 observes the first and last items, DET2 the first two.
pub fn deterministic_design(variant: DetVariant, k: usize, n: usize, n_full: usize) -> Result<MaskPlan> {
    if k < 2 {
        return Err(SqdError::InvalidArgument(format!("K = {k} must be at least 2")));
    }
    if n_full > n {
        return Err(SqdError::InvalidArgument(format!("{n_full} full rows exceed n = {n}")));
    }
    let pair = match variant {
        DetVariant::Det1 => [0, k - 1],
        DetVariant::Det2 => [0, 1],
    };
    let mut observed = vec![false; n * k];
    for i in 0..n {
        for j in 0..k {
            observed[i * k + j] = i < n_full || pair.contains(&j);
        }
    }
    Ok(MaskPlan { n, k, observed })
}

/// Delete-one jackknife SE of `sum(a) / sum(b)` over paired replicates.
pub fn jackknife_se_re(a: &[f64], b: &[f64]) -> Result<f64> {
    let r = a.len();
    if r != b.len() {
        return Err(SqdError::DimensionMismatch("replicate counts differ".into()));
    }
    if r < 2 {
        return Err(SqdError::InvalidArgument("jackknife needs at least two replicates".into()));
    }
    let sa = compensated_sum(a.iter().copied());
    let sb = compensated_sum(b.iter().copied());
    let theta = (0..r)
        .map(|i| {
            let den = sb - b[i];
            if den == 0.0 {
                Err(SqdError::InvalidArgument(format!("delete-one denominator zero at replicate {i}")))
            } else {
                Ok((sa - a[i]) / den)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = compensated_sum(theta.iter().copied()) / r as f64;
    let ss = compensated_sum(theta.iter().map(|t| (t - mean).powi(2)));
    Ok(((r as f64 - 1.0) / r as f64 * ss).sqrt())
}

/// Parameter set `{(rho1, rho2) : step <= rho2 < rho1 < 1}` on a grid of mesh `step`.
pub fn block_grid(g: usize, q: usize, step: f64, base: &ModelParams) -> Result<Vec<ModelParams>> {
    if !(step > 0.0 && step < 0.5) {
        return Err(SqdError::InvalidArgument(format!("grid step {step} outside (0, 0.5)")));
    }
    let levels: Vec<f64> = (1..)
        .map(|i| i as f64 * step)
        .take_while(|&r| r < 1.0 - 1e-9)
        .collect();
    let mut set = Vec::new();
    for (i, &r1) in levels.iter().enumerate() {
        for &r2 in &levels[..i] {
            set.push(with_sigma(base, block_sigma(g, q, r1, r2)?)?);
        }
    }
    if set.is_empty() {
        return Err(SqdError::InvalidArgument(format!("grid step {step} leaves no pairs")));
    }
    Ok(set)
}

fn estimate(model: ModelKind, data: &ObservedDataset) -> Result<EstimationResult> {
    match model {
        ModelKind::Mvn => em_mvn_with(data, &HARNESS_EM),
        ModelKind::Zmvln => estimate_zmvln_with(data, &HARNESS_EM),
    }
}

/// Pairwise-only samples can put the covariance MLE on the positive-definite boundary;
/// the harness then keeps the last positive-definite iterate.
const HARNESS_EM: EmOptions = EmOptions {
    tol: DEFAULT_EM_TOL,
    max_iters: DEFAULT_EM_MAX_ITERS,
    boundary: BoundaryPolicy::StopAtLastIterate,
};

fn mvn_from(est: &EstimationResult) -> Result<MvnParams> {
    MvnParams::new(est.mu_hat.clone(), est.sigma_hat.clone())
}

fn estimated_params(model: ModelKind, est: &EstimationResult) -> Result<ModelParams> {
    Ok(match model {
        ModelKind::Mvn => ModelParams::Mvn(mvn_from(est)?),
        ModelKind::Zmvln => {
            let lambda = est
                .lambda_hat
                .clone()
                .ok_or_else(|| SqdError::Estimation("missing nonzero rates".into()))?
                .map(|l| l.clamp(crate::zmvln::LAMBDA_CLAMP, 1.0 - crate::zmvln::LAMBDA_CLAMP));
            ModelParams::Zmvln(ZmvlnParams::new(lambda, est.mu_hat.clone(), est.sigma_hat.clone())?)
        }
    })
}

struct Prepared {
    ps: Arc<PatternSet>,
    population: DMatrix<f64>,
    truth: DVector<f64>,
    true_params: ModelParams,
    fixed: Vec<Option<DesignDistribution>>,
    opts: OptimizerOptions,
    warnings: Vec<String>,
}

fn prepare(sc: &Scenario) -> Result<Prepared> {
    sc.validate()?;
    let pop = &sc.pop;
    let ps = Arc::new(enumerate_patterns(pop.k(), sc.m)?);
    let population = gen_population(pop, sc.seed)?;
    let truth = column_means(&population);
    let true_params = pop.params()?;
    let opts = OptimizerOptions {
        symmetry: Some(pop.orbits(&ps)?),
        ..OptimizerOptions::default()
    };
    let mut warnings = Vec::new();
    let mut fixed = Vec::with_capacity(sc.designs.len());
    for &d in &sc.designs {
        let design = match d {
            DesignKind::Srs => Some(srs_design(ps.clone())?),
            DesignKind::Opt if sc.pilot.is_none() => {
                let r = optimize_local(&CriterionSpec::point(true_params.clone()), ps.clone(), &opts)?;
                warnings.extend(r.warnings.iter().map(|w| format!("OPT: {w}")));
                Some(r.design)
            }
            DesignKind::Bayes => {
                let prior = UniformBlockPrior::new(pop.g, pop.q, true_params.clone())?;
                let spec = CriterionSpec::bayes(pop.model, Arc::new(prior), sc.bayes_draws)?;
                let r = optimize_bayes(&spec, ps.clone(), &opts, sc.seed)?;
                warnings.extend(r.warnings.iter().map(|w| format!("BAYES: {w}")));
                Some(r.design)
            }
            DesignKind::Minimax => {
                let set = block_grid(pop.g, pop.q, sc.minimax_step, &true_params)?;
                let r = optimize_minimax(&CriterionSpec::minimax(set)?, ps.clone(), &opts)?;
                warnings.extend(r.warnings.iter().map(|w| format!("MINIMAX: {w}")));
                Some(r.design)
            }
            _ => None,
        };
        fixed.push(design);
    }
    Ok(Prepared {
        ps,
        population,
        truth,
        true_params,
        fixed,
        opts,
        warnings,
    })
}

struct ReplicateOutcome {
    errors: Vec<f64>,
    criteria: Vec<Option<f64>>,
    /// Designs whose estimate stopped at the positive-definite boundary.
    boundary: Vec<DesignKind>,
}

fn squared_error(est: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    compensated_sum(est.iter().zip(truth.iter()).map(|(a, b)| (a - b).powi(2)))
}

fn run_replicate(sc: &Scenario, prep: &Prepared, r: usize) -> Result<ReplicateOutcome> {
    let big_n = prep.population.nrows();
    let k = sc.pop.k();
    let mut rng = stream_rng(sc.seed, "replicate", r as u64);
    let pilot_n = sc.pilot.as_ref().map_or(0, |p| p.n);
    let all_rows = sample_indices(&mut rng, big_n, sc.max_rows() + pilot_n).into_vec();
    let (pilot_rows, rows) = all_rows.split_at(pilot_n);
    let pilot = match &sc.pilot {
        Some(spec) => {
            let values = DMatrix::from_fn(pilot_rows.len(), k, |i, j| {
                let shift = if j < k / 2 { -spec.shift } else { spec.shift };
                prep.population[(pilot_rows[i], j)] + shift
            });
            let est = estimate(sc.pop.model, &ObservedDataset::complete(values)?)?;
            Some(estimated_params(sc.pop.model, &est)?)
        }
        None => None,
    };
    let mut errors = Vec::with_capacity(sc.designs.len());
    let mut criteria = Vec::with_capacity(sc.designs.len());
    let mut boundary = Vec::new();
    for (di, &d) in sc.designs.iter().enumerate() {
        let mut drng = stream_rng(sc.seed, d.name(), r as u64);
        let n_rows = sc.rows_for(d);
        let rows = &rows[..n_rows];
        let design = match (&prep.fixed[di], d) {
            (Some(fixed), _) => Some(fixed.clone()),
            (None, DesignKind::Opt) => {
                let params = pilot.clone().expect("pilot present when OPT is not fixed");
                let res = optimize_local(&CriterionSpec::point(params), prep.ps.clone(), &prep.opts)?;
                Some(res.design)
            }
            _ => None,
        };
        let mean = if d.is_random() {
            let design = design.as_ref().expect("random designs are resolved");
            let data = draw_patterns(&prep.population, rows, design, &mut drng)?;
            criteria.push(Some(prep.true_params.criterion(prep.ps.clone())?.value(design.probs())?));
            let est = estimate(sc.pop.model, &data)?;
            if !est.converged && est.iterations < DEFAULT_EM_MAX_ITERS {
                boundary.push(d);
            }
            est.mean_estimate().clone()
        } else {
            criteria.push(None);
            let values = DMatrix::from_fn(n_rows, k, |i, j| prep.population[(rows[i], j)]);
            match d {
                DesignKind::Full => estimate(sc.pop.model, &ObservedDataset::complete(values)?)?
                    .mean_estimate()
                    .clone(),
                DesignKind::Det1 | DesignKind::Det2 => {
                    let variant = if d == DesignKind::Det1 { DetVariant::Det1 } else { DetVariant::Det2 };
                    let plan = deterministic_design(variant, k, n_rows, sc.det_full_rows)?;
                    let data = ObservedDataset::new(values, plan.observed)?;
                    let params = match &pilot {
                        Some(ModelParams::Mvn(p)) => p.clone(),
                        _ => mvn_from(&estimate(ModelKind::Mvn, &data)?)?,
                    };
                    let seed = drng.random::<u64>();
                    imputation_mean(&conditional_impute(&data, &params, sc.imputation_draws, seed)?)
                }
                _ => unreachable!("random designs handled above"),
            }
        };
        errors.push(squared_error(&mean, &prep.truth));
    }
    Ok(ReplicateOutcome {
        errors,
        criteria,
        boundary,
    })
}

/// Runs every replicate of the scenario and summarizes per design.
pub fn run_study(sc: &Scenario) -> Result<StudyResult> {
    let prep = prepare(sc)?;
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..sc.replications)
        .into_par_iter()
        .map(|r| run_replicate(sc, &prep, r))
        .collect();
    let mut failed = Vec::new();
    let mut ok = Vec::new();
    let mut warnings = prep.warnings.clone();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => {
                warnings.push(format!("replicate {r} failed: {e}"));
                failed.push(r);
            }
        }
    }
    if failed.len() * 100 > sc.replications {
        return Err(SqdError::StudyAborted {
            failed: failed.len(),
            total: sc.replications,
            first: warnings[prep.warnings.len()].clone(),
        });
    }
    let r_ok = ok.len();
    for &d in &sc.designs {
        let stops = ok.iter().filter(|o| o.boundary.contains(&d)).count();
        if stops > 0 {
            warnings.push(format!(
                "{}: {stops} of {r_ok} estimates stopped at the positive-definite boundary",
                d.name()
            ));
        }
    }
    let k = sc.pop.k() as f64;
    let per_replicate: Vec<Vec<f64>> = (0..sc.designs.len())
        .map(|d| ok.iter().map(|o| o.errors[d]).collect())
        .collect();
    let srs_idx = sc.designs.iter().position(|&d| d == DesignKind::Srs);
    let crit_mean: Vec<Option<f64>> = (0..sc.designs.len())
        .map(|d| {
            let mut acc = CompensatedSum::new();
            for o in &ok {
                acc.add(o.criteria[d]?);
            }
            Some(acc.value() / r_ok as f64)
        })
        .collect();
    let mut designs = Vec::with_capacity(sc.designs.len());
    for (di, &d) in sc.designs.iter().enumerate() {
        let total = compensated_sum(per_replicate[di].iter().copied());
        let (re_mse, se_re) = match srs_idx {
            Some(s) => {
                let srs_total = compensated_sum(per_replicate[s].iter().copied());
                let re = srs_total / total;
                let se = if r_ok >= 2 {
                    jackknife_se_re(&per_replicate[s], &per_replicate[di]).ok()
                } else {
                    None
                };
                (Some(re), se)
            }
            None => (None, None),
        };
        let re_a = match (srs_idx.and_then(|s| crit_mean[s]), crit_mean[di]) {
            (Some(a_srs), Some(a)) => Some(a_srs / a),
            _ => None,
        };
        designs.push(DesignSummary {
            design: d,
            n: sc.rows_for(d),
            mse: total / (r_ok as f64 * k),
            mse_total: total / r_ok as f64,
            re_mse,
            se_re,
            criterion: crit_mean[di],
            re_a,
        });
    }
    Ok(StudyResult {
        label: sc.label.clone(),
        scenario: sc.clone(),
        replications_ok: r_ok,
        failed_replications: failed,
        designs,
        warnings,
        per_replicate,
    })
}

/// Locally optimal design at the true parameters of `pop`, with the symmetric
/// representative returned.
pub fn true_local_design(pop: &StructuredPopSpec, m: usize) -> Result<crate::optimizer::OptimizeResult> {
    let ps = Arc::new(enumerate_patterns(pop.k(), m)?);
    let opts = OptimizerOptions {
        symmetry: Some(pop.orbits(&ps)?),
        ..OptimizerOptions::default()
    };
    optimize_local(&CriterionSpec::point(pop.params()?), ps, &opts)
}
