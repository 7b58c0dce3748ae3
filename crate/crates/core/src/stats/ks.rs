//! Kolmogorov-Smirnov distances and critical values.

use super::StatsError;

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Two-sample sup-distance of empirical CDFs; symmetric in its arguments.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let xs = sorted(a);
    let ys = sorted(b);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample sup-distance against a reference CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<f64, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let c = cdf(x);
        d = d.max(((i + 1) as f64 / n - c).abs());
        d = d.max((i as f64 / n - c).abs());
    }
    Ok(d)
}

fn ks_coefficient(alpha: f64) -> f64 {
    // c(alpha) = sqrt(-ln(alpha / 2) / 2); 1.358 at the 5% level.
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Two-sample critical value at level `alpha`: the asymptotic coefficient
/// over the effective sample size with Stephens' finite-sample correction.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    ks_coefficient(alpha) / (ne.sqrt() + 0.12 + 0.11 / ne.sqrt())
}
