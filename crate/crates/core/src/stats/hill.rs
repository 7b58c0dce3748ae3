//! Hill estimator for the tail index of heavy-tailed samples.

use super::StatsError;
use serde::{Deserialize, Serialize};

/// Tail-index point estimate with its asymptotic-normality interval.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TailFit {
    pub gamma_hat: f64,
    pub k_used: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// `gamma_hat = k / sum_{i=1}^{k} log(X_(i) / X_(k+1))` over descending
/// order statistics, with the 95% interval `gamma_hat (1 ± 1.96 / sqrt(k))`.
pub fn hill_estimator(samples: &[f64], k: usize) -> Result<TailFit, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if k == 0 || k >= samples.len() {
        return Err(StatsError::DegenerateSample(format!(
            "order-statistic count k = {k} outside [1, {})",
            samples.len()
        )));
    }
    if samples.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
        return Err(StatsError::DegenerateSample("samples must be positive and finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let pivot = sorted[k];
    if pivot == 0.0 {
        return Err(StatsError::DegenerateSample("X_(k+1) is zero".into()));
    }
    let sum_log: f64 = sorted[..k].iter().map(|&x| (x / pivot).ln()).sum();
    if sum_log <= 0.0 {
        return Err(StatsError::DegenerateSample("all top-order statistics equal".into()));
    }
    let gamma_hat = k as f64 / sum_log;
    let half = 1.96 / (k as f64).sqrt();
    Ok(TailFit {
        gamma_hat,
        k_used: k,
        ci_low: gamma_hat * (1.0 - half),
        ci_high: gamma_hat * (1.0 + half),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::pareto_from_unit;
    use crate::walk::Stream;

    #[test]
    fn hand_evaluated_formula() {
        // {e^4, e^2, e^1}, k = 2: gamma = 2 / ((4-1) + (2-1)) = 0.5
        let samples = vec![4f64.exp(), 2f64.exp(), 1f64.exp()];
        let fit = hill_estimator(&samples, 2).unwrap();
        assert!((fit.gamma_hat - 0.5).abs() < 1e-12);
        assert!(fit.ci_low <= fit.gamma_hat && fit.gamma_hat <= fit.ci_high);
    }

    #[test]
    fn consistent_on_exact_pareto() {
        let stream = Stream::new(999, 0);
        let n = 1_000_000;
        let samples: Vec<f64> =
            (0..n).map(|i| pareto_from_unit(stream.uniform(i, 0), 0.5)).collect();
        let fit = hill_estimator(&samples, 10_000).unwrap();
        assert!(
            fit.gamma_hat > 0.48 && fit.gamma_hat < 0.52,
            "gamma_hat = {}",
            fit.gamma_hat
        );
        assert!(fit.ci_low <= 0.5 && 0.5 <= fit.ci_high);
    }

    #[test]
    fn scale_invariance() {
        let stream = Stream::new(5, 0);
        let samples: Vec<f64> =
            (0..5000).map(|i| pareto_from_unit(stream.uniform(i, 0), 0.7)).collect();
        let scaled: Vec<f64> = samples.iter().map(|x| 7.0 * x).collect();
        let a = hill_estimator(&samples, 500).unwrap();
        let b = hill_estimator(&scaled, 500).unwrap();
        assert!((a.gamma_hat - b.gamma_hat).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert_eq!(hill_estimator(&[], 1).unwrap_err(), StatsError::EmptySample);
        assert!(hill_estimator(&[1.0, 1.0, 1.0], 1).is_err());
        assert!(hill_estimator(&[2.0, 1.0], 5).is_err());
    }

    #[test]
    fn ci_width_shrinks_with_k() {
        let stream = Stream::new(13, 0);
        let samples: Vec<f64> =
            (0..200_000).map(|i| pareto_from_unit(stream.uniform(i, 0), 0.3)).collect();
        let small = hill_estimator(&samples, 100).unwrap();
        let large = hill_estimator(&samples, 10_000).unwrap();
        assert!(large.ci_high - large.ci_low < small.ci_high - small.ci_low);
        assert!(large.ci_low <= 0.3 && 0.3 <= large.ci_high);
    }
}
