//! Closed-form results for two groups of equicorrelated questions with `m = 2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SqdError};
use crate::rng::stream_rng;
use crate::simulation::block_sigma;

/// Two groups of `q` questions, within-group correlation `rho1`, between-group `rho2`,
/// unit variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoGroupSpec {
    pub q: usize,
    pub rho1: f64,
    pub rho2: f64,
}

impl TwoGroupSpec {
    pub fn new(q: usize, rho1: f64, rho2: f64) -> Result<Self> {
        if q < 2 {
            return Err(SqdError::InvalidArgument(format!("q = {q} must be at least 2")));
        }
        if !(rho1.abs() < 1.0) || !(rho2.abs() < rho1.abs()) || rho2 == 0.0 {
            return Err(SqdError::InvalidArgument(format!(
                "need 0 < |rho2| < |rho1| < 1, got rho1 = {rho1}, rho2 = {rho2}"
            )));
        }
        block_sigma(2, q, rho1, rho2)?;
        Ok(Self { q, rho1, rho2 })
    }

    /// The implied `2q x 2q` covariance.
    pub fn sigma(&self) -> DMatrix<f64> {
        block_sigma(2, self.q, self.rho1, self.rho2).expect("validated at construction")
    }
}

/// A-criterion of the symmetric two-group design with within-group mass `pi`.
pub fn a_pi(spec: &TwoGroupSpec, pi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(SqdError::InvalidArgument(format!("pi = {pi} outside [0, 1]")));
    }
    let q = spec.q as f64;
    let (r1, r2) = (spec.rho1, spec.rho2);
    let v1 = 1.0 - r1 * r1;
    let v2 = 1.0 - r2 * r2;
    let a1 = pi / (q * v1) + (1.0 - pi) / (q * v2) + pi * r1 / (q * (q - 1.0) * v1);
    let x = pi * (1.0 - r1) / (q * v1) + (1.0 - pi) / (q * v2);
    let c2 = (1.0 - pi).powi(2) * r2 * r2 / (q * q * v2 * v2);
    let det = x * x - c2;
    if !(a1 > 0.0) || !(det > 0.0) || !(x > 0.0) {
        return Err(SqdError::SingularInformation { rcond: 0.0 });
    }
    Ok((2.0 * q - 2.0) / a1 + 2.0 * x / det)
}

/// Within-group mass of simple random sampling of two questions out of `2q`.
pub fn pi_srs(q: usize) -> f64 {
    let q = q as f64;
    (q - 1.0) / (2.0 * q - 1.0)
}

/// Minimizer of [`a_pi`] over `[0, 1]`.
pub fn pi_opt(spec: &TwoGroupSpec) -> Result<f64> {
    let f = |p: f64| a_pi(spec, p);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > 1e-13 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mut best = 0.5 * (lo + hi);
    let mut fbest = f(best)?;
    for edge in [0.0, 1.0] {
        let fe = f(edge)?;
        if fe < fbest {
            best = edge;
            fbest = fe;
        }
    }
    Ok(best)
}

/// Large-`q` limit of `A(pi_srs) / A(pi_opt)`.
pub fn re_limit(rho1: f64, rho2: f64) -> f64 {
    let v1 = 1.0 - rho1 * rho1;
    let v2 = 1.0 - rho2 * rho2;
    (2.0 / v1) / (1.0 / v1 + 1.0 / v2)
}

/// One row of a theory curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryRow {
    pub q: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub pi_srs: f64,
    pub pi_opt: f64,
    #[serde(rename = "A_srs")]
    pub a_srs: f64,
    #[serde(rename = "A_opt")]
    pub a_opt: f64,
    pub re: f64,
    pub re_limit: f64,
}

pub fn theory_row(spec: &TwoGroupSpec) -> Result<TheoryRow> {
    let ps = pi_srs(spec.q);
    let po = pi_opt(spec)?;
    let a_srs = a_pi(spec, ps)?;
    let a_opt = a_pi(spec, po)?;
    Ok(TheoryRow {
        q: spec.q,
        rho1: spec.rho1,
        rho2: spec.rho2,
        pi_srs: ps,
        pi_opt: po,
        a_srs,
        a_opt,
        re: a_srs / a_opt,
        re_limit: re_limit(spec.rho1, spec.rho2),
    })
}

/// Spread of the plug-in optimal design over pilot replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySummary {
    pub replications: usize,
    pub n_pilot: usize,
    pub mean_pi_hat: f64,
    pub sd_pi_hat: f64,
    /// `A(pi_srs) / A(pi_hat)` under the true parameters.
    pub mean_ratio: f64,
    pub sd_ratio: f64,
    /// Replications where `|rho2_hat| >= |rho1_hat|`; excluded from the moments.
    pub flagged: Vec<usize>,
    pub rho_hat: Vec<(f64, f64)>,
}

/// Averages of within-group and between-group pairwise sample correlations.
pub fn group_correlations(data: &DMatrix<f64>, q: usize) -> (f64, f64) {
    let n = data.nrows() as f64;
    let k = data.ncols();
    let means = DVector::from_fn(k, |j, _| data.column(j).sum() / n);
    let mut centered = data.clone();
    for j in 0..k {
        let m = means[j];
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let cross = centered.transpose() * &centered;
    let (mut w, mut nw, mut b, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..k {
        for j in (i + 1)..k {
            let r = cross[(i, j)] / (cross[(i, i)] * cross[(j, j)]).sqrt();
            if i / q == j / q {
                w += r;
                nw += 1;
            } else {
                b += r;
                nb += 1;
            }
        }
    }
    (w / nw as f64, b / nb.max(1) as f64)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

/// Simulates pilot samples, re-estimates `(rho1, rho2)` and reports the spread of the
/// plug-in `pi_opt` and of its efficiency relative to SRS.
pub fn plug_in_stability(
    spec: &TwoGroupSpec,
    n_pilot: usize,
    replications: usize,
    seed: u64,
) -> Result<StabilitySummary> {
    if n_pilot < 30 {
        return Err(SqdError::InvalidArgument(format!(
            "n_pilot = {n_pilot} must be at least 30"
        )));
    }
    if replications == 0 {
        return Err(SqdError::InvalidArgument("replications must be positive".into()));
    }
    let k = 2 * spec.q;
    let l = spec
        .sigma()
        .cholesky()
        .ok_or_else(|| SqdError::NotPositiveDefinite("structured covariance".into()))?
        .unpack();
    let a_srs = a_pi(spec, pi_srs(spec.q))?;
    let reps: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, "plug-in-stability", r as u64);
            let z = DMatrix::from_fn(n_pilot, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = z * l.transpose();
            group_correlations(&x, spec.q)
        })
        .collect();
    let mut flagged = Vec::new();
    let mut pis = Vec::new();
    let mut ratios = Vec::new();
    for (r, &(r1, r2)) in reps.iter().enumerate() {
        match TwoGroupSpec::new(spec.q, r1, r2) {
            Ok(est) => {
                let p = pi_opt(&est)?;
                pis.push(p);
                ratios.push(a_srs / a_pi(spec, p)?);
            }
            Err(_) => flagged.push(r),
        }
    }
    let (mean_pi_hat, sd_pi_hat) = mean_sd(&pis);
    let (mean_ratio, sd_ratio) = mean_sd(&ratios);
    Ok(StabilitySummary {
        replications,
        n_pilot,
        mean_pi_hat,
        sd_pi_hat,
        mean_ratio,
        sd_ratio,
        flagged,
        rho_hat: reps,
    })
}
