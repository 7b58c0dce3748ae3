//! Monte Carlo checks for moments of truncated heavy-tailed sums and the
//! polynomial tail bound for centered bounded sums.

use crate::env::pareto_from_unit;
use crate::walk::Stream;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reps: usize,
}

/// Monte Carlo estimate of `E[(sum_{j<=n} (X_j / n^{1/gamma} ∧
/// n^{-cap_exponent/gamma}))^p]` for i.i.d. Pareto(gamma) draws.
/// `cap_exponent = 0` recovers the `∧ 1` truncation.
pub fn truncated_sum_moment(
    gamma: f64,
    n: usize,
    p: f64,
    cap_exponent: f64,
    reps: usize,
    stream: &Stream,
) -> MomentEstimate {
    assert!(gamma > 0.0 && gamma < 1.0);
    assert!(p >= 1.0);
    assert!(reps >= 100);
    let norm = (n as f64).powf(1.0 / gamma);
    let cap = (n as f64).powf(-cap_exponent / gamma);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for r in 0..reps {
        let mut s = 0.0;
        for j in 0..n {
            let u = stream.uniform((r * n + j) as u64, 0);
            let x = pareto_from_unit(u, gamma);
            s += (x / norm).min(cap);
        }
        let v = s.powf(p);
        let delta = v - mean;
        mean += delta / (r + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = if reps > 1 { m2 / (reps - 1) as f64 } else { 0.0 };
    let half = 1.96 * (var / reps as f64).sqrt();
    MomentEstimate { value: mean, ci_low: mean - half, ci_high: mean + half, reps }
}

/// Estimated tail probability `P(sum of n centered ±1 steps > n^{0.75})`
/// with a rule-of-three upper bound when no exceedance is observed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TailProbe {
    pub n: usize,
    pub estimate: f64,
    pub upper95: f64,
    pub hits: usize,
    pub reps: usize,
}

/// Estimates `P(S_n > n^{0.75})` for Rademacher sums by direct simulation.
pub fn polynomial_tail_probe(n: usize, reps: usize, stream: &Stream) -> TailProbe {
    let threshold = (n as f64).powf(0.75);
    let mut hits = 0usize;
    for r in 0..reps {
        let mut s = 0i64;
        // 64 signs per uniform draw keeps this probe cheap
        let mut remaining = n;
        let mut word_idx = 0u64;
        while remaining > 0 {
            let take = remaining.min(53);
            let u = stream.uniform(r as u64 * 1_048_576 + word_idx, 0);
            let mut bits = (u * (1u64 << take) as f64) as u64;
            for _ in 0..take {
                s += if bits & 1 == 1 { 1 } else { -1 };
                bits >>= 1;
            }
            remaining -= take;
            word_idx += 1;
        }
        if (s as f64) > threshold {
            hits += 1;
        }
    }
    let estimate = hits as f64 / reps as f64;
    // rule of three for zero observations; otherwise a normal upper bound
    let upper95 = if hits == 0 {
        3.0 / reps as f64
    } else {
        estimate + 1.96 * (estimate * (1.0 - estimate) / reps as f64).sqrt()
    };
    TailProbe { n, estimate, upper95, hits, reps }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_floor_saturates_minimum() {
        // n = 1, p = 1, cap 0: X ∧ 1 = 1 because X >= 1 always.
        let s = Stream::new(201, 0);
        let est = truncated_sum_moment(0.5, 1, 1.0, 0.0, 200, &s);
        assert_eq!(est.value, 1.0);
        assert_eq!(est.ci_low, 1.0);
    }

    #[test]
    fn first_moment_stays_bounded() {
        // p = 1: E[(sum X_j/n^2 ∧ 1)] stays bounded over n in {10, 100, 1000}.
        let s = Stream::new(202, 0);
        let vals: Vec<f64> = [10usize, 100, 1000]
            .iter()
            .map(|&n| truncated_sum_moment(0.5, n, 1.0, 0.0, 4000, &s).value)
            .collect();
        let fit = crate::stats::scaling_exponent_fit(
            &[(10.0, vals[0]), (100.0, vals[1]), (1000.0, vals[2])],
        )
        .unwrap();
        assert!(fit.ci_low <= 0.1, "growth trend detected: {fit:?}");
    }

    #[test]
    fn rademacher_tail_is_estimable() {
        let s = Stream::new(203, 0);
        let probe = polynomial_tail_probe(100, 100_000, &s);
        // P(S_100 > 31.6) = P(Bin(100, 1/2) >= 66) ~ 9e-4
        assert!(probe.estimate > 1e-4 && probe.estimate < 5e-3, "{probe:?}");
    }
}
