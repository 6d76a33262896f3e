//! A-optimal split questionnaire designs.
//!
//! A split questionnaire gives each respondent a random size-`m` subset of `K`
//! questions. This crate chooses the distribution over subsets that minimizes the
//! trace of the asymptotic covariance of the item-mean estimators, for
//! multivariate normal and zero-inflated multivariate log-normal responses.

pub mod criterion;
pub mod error;
pub mod estimation;
pub mod io;
pub mod linalg;
pub mod mvn;
pub mod optimizer;
pub mod pattern;
pub mod pipeline;
pub mod prior;
pub mod rng;
pub mod simulation;
pub mod theory;
pub mod zmvln;

pub use criterion::{DesignCriterion, ModelKind, ModelParams};
pub use error::{Result, SqdError};
pub use estimation::{EstimationResult, ObservedDataset};
pub use mvn::MvnParams;
pub use optimizer::{CriterionSpec, OptimizeResult, OptimizerOptions};
pub use pattern::{DesignDistribution, Pattern, PatternOrbits, PatternSet};
pub use rng::DEFAULT_SEED;
pub use simulation::{DesignKind, Scenario, StructuredPopSpec, StudyResult};
pub use zmvln::ZmvlnParams;

pub use nalgebra::{DMatrix, DVector};
