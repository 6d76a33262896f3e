//! Design criteria as functions of the pattern-probability vector.

use std::sync::Arc;

use crate::error::Result;
use crate::mvn::{MvnCriterion, MvnParams};
use crate::pattern::PatternSet;
use crate::zmvln::{ZmvlnCriterion, ZmvlnParams};

/// A smooth convex criterion over the probability simplex of one pattern set.
pub trait DesignCriterion: Send + Sync {
    fn pattern_set(&self) -> &PatternSet;

    fn value(&self, probs: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, probs: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Conditions worth reporting alongside results.
    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Response model tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mvn,
    Zmvln,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Mvn => write!(f, "mvn"),
            ModelKind::Zmvln => write!(f, "zmvln"),
        }
    }
}

/// Parameters of either response model.
#[derive(Debug, Clone)]
pub enum ModelParams {
    Mvn(MvnParams),
    Zmvln(ZmvlnParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Mvn(_) => ModelKind::Mvn,
            ModelParams::Zmvln(_) => ModelKind::Zmvln,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            ModelParams::Mvn(p) => p.k(),
            ModelParams::Zmvln(p) => p.k(),
        }
    }

    /// The A-criterion of this model over `ps`.
    pub fn criterion(&self, ps: Arc<PatternSet>) -> Result<Box<dyn DesignCriterion>> {
        Ok(match self {
            ModelParams::Mvn(p) => Box::new(MvnCriterion::new(p.clone(), ps)?),
            ModelParams::Zmvln(p) => Box::new(ZmvlnCriterion::new(p.clone(), ps)?),
        })
    }
}
