//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sqd_core::estimation::{mvn_observed_loglik, ObservedDataset};
use sqd_core::pattern::DesignDistribution;
use sqd_core::zmvln::{zmvln_log_density, zmvln_sample, ZmvlnParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central differences of `f` at `x`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Random SPD matrix with eigenvalues bounded away from zero.
pub fn random_spd(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    &a * a.transpose() + DMatrix::identity(k, k) * 0.5
}

/// Random interior point of the simplex.
pub fn random_probs(j: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..j).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Monte-Carlo expected information of one respondent: mean outer product of the
/// finite-difference score of the observed-data log density, with entrywise SEs.
pub fn mc_information_zmvln(
    params: &ZmvlnParams,
    d: &DesignDistribution,
    draws: usize,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = params.k();
    let theta = params.theta();
    let p = theta.len();
    let full = zmvln_sample(params, draws, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let pick = WeightedIndex::new(d.probs()).unwrap();
    let patterns = d.pattern_set().patterns();
    let shifted: Vec<(ZmvlnParams, ZmvlnParams)> = (0..p)
        .map(|i| {
            let h = 1e-5;
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            (
                ZmvlnParams::from_theta(&a, k).unwrap(),
                ZmvlnParams::from_theta(&b, k).unwrap(),
            )
        })
        .collect();
    let mut sum = DMatrix::zeros(p, p);
    let mut sum_sq = DMatrix::zeros(p, p);
    for row in 0..draws {
        let pat = &patterns[pick.sample(&mut r)];
        let y: Vec<f64> = pat.items().iter().map(|&j| full[(row, j)]).collect();
        let score = DVector::from_iterator(
            p,
            shifted.iter().map(|(a, b)| {
                (zmvln_log_density(a, &y, pat).unwrap() - zmvln_log_density(b, &y, pat).unwrap()) / 2e-5
            }),
        );
        let outer = &score * score.transpose();
        sum_sq += outer.component_mul(&outer);
        sum += outer;
    }
    let n = draws as f64;
    let mean = &sum / n;
    let var = (&sum_sq / n - mean.component_mul(&mean)) * (n / (n - 1.0));
    let se = var.map(|v| (v.max(0.0) / n).sqrt());
    (mean, se)
}

/// Observed-data log likelihood maximized directly by BFGS over `(mu, L)` with
/// `Sigma = L L'` and a log-parameterized diagonal of `L`.
pub fn direct_mle_loglik(data: &ObservedDataset, start_mu: &DVector<f64>, start_sigma: &DMatrix<f64>) -> f64 {
    let k = data.k();
    let nv = k * (k + 1) / 2;
    let unpack = |x: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mu = DVector::from_column_slice(&x[..k]);
        let mut l = DMatrix::zeros(k, k);
        let mut t = k;
        for j in 0..k {
            for i in j..k {
                l[(i, j)] = if i == j { x[t].exp() } else { x[t] };
                t += 1;
            }
        }
        (mu, &l * l.transpose())
    };
    let negll = |x: &[f64]| -> f64 {
        let (mu, sigma) = unpack(x);
        -mvn_observed_loglik(data, &mu, &sigma).unwrap_or(f64::NEG_INFINITY)
    };
    let l0 = start_sigma.clone().cholesky().unwrap().unpack();
    let mut x: Vec<f64> = start_mu.iter().copied().collect();
    for j in 0..k {
        for i in j..k {
            x.push(if i == j { l0[(i, j)].ln() } else { l0[(i, j)] });
        }
    }
    let dim = k + nv;
    let grad = |x: &[f64]| fd_gradient(&negll, x, 1e-6);
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut fx = negll(&x);
    let mut g = DVector::from_vec(grad(&x));
    for _ in 0..2000 {
        if g.amax() < 1e-9 {
            break;
        }
        let dir = -(&h * &g);
        let mut step = 1.0;
        let slope = g.dot(&dir);
        let (x_new, f_new) = loop {
            let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            let fc = negll(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                break (cand, fc);
            }
            step *= 0.5;
            if step < 1e-16 {
                break (x.clone(), fx);
            }
        };
        if f_new >= fx && step < 1e-16 {
            break;
        }
        let g_new = DVector::from_vec(grad(&x_new));
        let s = DVector::from_iterator(dim, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(dim, dim);
            let left = &i - &s * y.transpose() * rho;
            let right = &i - &y * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    -fx
}

/// Golden-section minimizer of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Dense A-criterion `tr(M^-1)` built from scratch: each pattern contributes the
/// zero-padded inverse of its covariance block.
pub fn dense_a_mvn(sigma: &DMatrix<f64>, d: &DesignDistribution) -> f64 {
    let k = sigma.nrows();
    let mut m = DMatrix::zeros(k, k);
    for (p, &w) in d.pattern_set().patterns().iter().zip(d.probs()) {
        let it = p.items();
        let sub = DMatrix::from_fn(it.len(), it.len(), |a, b| sigma[(it[a], it[b])]);
        let inv = sub.try_inverse().unwrap();
        for a in 0..it.len() {
            for b in 0..it.len() {
                m[(it[a], it[b])] += w * inv[(a, b)];
            }
        }
    }
    m.try_inverse().unwrap().trace()
}
