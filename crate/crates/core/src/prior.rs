//! Parameter priors for Bayesian designs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::criterion::ModelParams;
use crate::error::{Result, SqdError};
use crate::linalg::{spd_inverse, symmetrize};
use crate::mvn::MvnParams;
use crate::simulation::block_sigma;
use crate::zmvln::ZmvlnParams;

pub trait PriorSampler: Send + Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<ModelParams>;
}

/// Replaces the covariance of `base`, keeping its other parameters.
pub fn with_sigma(base: &ModelParams, sigma: DMatrix<f64>) -> Result<ModelParams> {
    Ok(match base {
        ModelParams::Mvn(p) => ModelParams::Mvn(MvnParams::new(p.mu().clone(), sigma)?),
        ModelParams::Zmvln(p) => ModelParams::Zmvln(ZmvlnParams::new(
            p.lambda().clone(),
            p.mu().clone(),
            sigma,
        )?),
    })
}

/// `(rho1, rho2)` uniform on `0 < rho2 < rho1 < 1` within the `g`-group block family.
#[derive(Debug, Clone)]
pub struct UniformBlockPrior {
    pub g: usize,
    pub q: usize,
    pub base: ModelParams,
}

impl UniformBlockPrior {
    pub fn new(g: usize, q: usize, base: ModelParams) -> Result<Self> {
        if base.k() != g * q {
            return Err(SqdError::DimensionMismatch(format!(
                "base parameters have K = {} but g * q = {}",
                base.k(),
                g * q
            )));
        }
        Ok(Self { g, q, base })
    }

    pub fn draw_rhos(rng: &mut ChaCha8Rng) -> (f64, f64) {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        (a.max(b), a.min(b))
    }
}

impl PriorSampler for UniformBlockPrior {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<ModelParams> {
        let (r1, r2) = Self::draw_rhos(rng);
        with_sigma(&self.base, block_sigma(self.g, self.q, r1, r2)?)
    }
}

/// `Sigma ~ IW(df, scale)`; the remaining parameters come from `base`.
#[derive(Debug, Clone)]
pub struct InverseWishartPrior {
    pub base: ModelParams,
    pub df: f64,
    scale_inv_chol: DMatrix<f64>,
}

impl InverseWishartPrior {
    pub fn new(base: ModelParams, df: f64, scale: DMatrix<f64>) -> Result<Self> {
        let k = base.k();
        if scale.nrows() != k || scale.ncols() != k {
            return Err(SqdError::DimensionMismatch(format!(
                "scale is {}x{}, expected {k}x{k}",
                scale.nrows(),
                scale.ncols()
            )));
        }
        if !(df > (k as f64) - 1.0) {
            return Err(SqdError::InvalidArgument(format!(
                "degrees of freedom {df} must exceed K - 1 = {}",
                k - 1
            )));
        }
        let inv = spd_inverse(&scale)
            .ok_or_else(|| SqdError::NotPositiveDefinite("inverse-Wishart scale".into()))?;
        let scale_inv_chol = inv
            .cholesky()
            .ok_or_else(|| SqdError::NotPositiveDefinite("inverse-Wishart scale".into()))?
            .unpack();
        Ok(Self {
            base,
            df,
            scale_inv_chol,
        })
    }

    /// The prior used for the pilot workflow: `df` degrees of freedom and scale `df * sigma_hat`.
    pub fn centered(base: ModelParams, df: f64) -> Result<Self> {
        let sigma = match &base {
            ModelParams::Mvn(p) => p.sigma().clone(),
            ModelParams::Zmvln(p) => p.sigma().clone(),
        };
        Self::new(base, df, sigma * df)
    }

    /// One draw of `Sigma` by the Bartlett decomposition.
    pub fn sample_sigma(&self, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        let k = self.base.k();
        let mut a = DMatrix::zeros(k, k);
        for i in 0..k {
            let chi = ChiSquared::new(self.df - i as f64)
                .map_err(|e| SqdError::InvalidArgument(e.to_string()))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let la = &self.scale_inv_chol * a;
        let w = &la * la.transpose();
        let mut sigma = spd_inverse(&w)
            .ok_or_else(|| SqdError::NotPositiveDefinite("Wishart draw".into()))?;
        symmetrize(&mut sigma);
        Ok(sigma)
    }
}

impl PriorSampler for InverseWishartPrior {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<ModelParams> {
        with_sigma(&self.base, self.sample_sigma(rng)?)
    }
}

/// Always returns the same parameters.
#[derive(Debug, Clone)]
pub struct PointPrior(pub ModelParams);

impl PriorSampler for PointPrior {
    fn sample(&self, _rng: &mut ChaCha8Rng) -> Result<ModelParams> {
        Ok(self.0.clone())
    }
}

/// Structured mean `(1 1_q, 2 1_q, .., g 1_q)`.
pub fn block_mean(g: usize, q: usize) -> DVector<f64> {
    DVector::from_fn(g * q, |i, _| (i / q + 1) as f64)
}
