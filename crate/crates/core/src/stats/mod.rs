//! Estimators and sampling oracles: tail-index estimation, one-sided stable
//! sampling, distributional distances, scaling-exponent regression, nested
//! environment-variance estimation and truncated-moment checks.

mod fit;
mod hill;
mod ks;
mod moments;
mod stable;
mod variance;

pub use fit::{scaling_exponent_fit, SlopeFit};
pub use hill::{hill_estimator, TailFit};
pub use ks::{ks_distance, ks_one_sample, ks_two_sample_critical};
pub use moments::{polynomial_tail_probe, truncated_sum_moment, MomentEstimate, TailProbe};
pub use stable::{sample_exponential, sample_one_sided_stable, sample_standard_normal};
pub use variance::{
    between_env_variance, nested_variance, Functional, VarianceComponents, VarianceCurve,
    VariancePoint, VarianceSimParams,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("empty sample")]
    EmptySample,
    #[error("values must be positive for a log-log fit")]
    NonPositiveValue,
    #[error("need at least {0} points")]
    TooFewPoints(usize),
    #[error(transparent)]
    Regen(#[from] crate::regen::RegenError),
}

/// Serializable experiment report; every number it carries is reproducible
/// bit-exactly from the recorded configuration and seeds. Timing is kept in
/// a separate optional field so data artifacts stay byte-stable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StatsReport {
    pub experiment: String,
    pub config: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_secs: Option<f64>,
}

impl StatsReport {
    pub fn new(experiment: &str) -> StatsReport {
        StatsReport {
            experiment: experiment.to_string(),
            config: BTreeMap::new(),
            metrics: BTreeMap::new(),
            seeds: Vec::new(),
            runtime_secs: None,
        }
    }

    pub fn with_config(mut self, key: &str, value: impl ToString) -> StatsReport {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }
}
