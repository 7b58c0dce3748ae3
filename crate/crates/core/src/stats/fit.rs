//! Least-squares scaling-exponent fits on log-log scales.

use super::StatsError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// OLS slope of `log(value)` against `log(n)` with the standard-error 95%
/// interval `slope ± 1.96 se`.
pub fn scaling_exponent_fit(points: &[(f64, f64)]) -> Result<SlopeFit, StatsError> {
    if points.len() < 3 {
        return Err(StatsError::TooFewPoints(3));
    }
    if points.iter().any(|&(n, v)| n <= 0.0 || v <= 0.0) {
        return Err(StatsError::NonPositiveValue);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(StatsError::DegenerateSample("all abscissae equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (xs.len() - 2).max(1) as f64;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = (sse / dof / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        ci_low: slope - 1.96 * stderr,
        ci_high: slope + 1.96 * stderr,
    })
}
