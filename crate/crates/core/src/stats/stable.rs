//! Sampling oracles driven by the counter-based streams: the one-sided
//! stable law with Laplace transform `exp(-lambda^gamma)`, exponentials and
//! standard normals.

use crate::walk::Stream;
use std::f64::consts::PI;

#[inline]
fn clamp_open(u: f64) -> f64 {
    u.clamp(1e-15, 1.0 - 1e-15)
}

/// Exponential(1) via inversion; slot-addressed draw `idx` of the stream.
pub fn sample_exponential(stream: &Stream, idx: u64, slot: u32) -> f64 {
    -clamp_open(stream.uniform(idx, slot)).ln()
}

/// Standard normal via Box-Muller (uses slots `slot` and `slot + 1`).
pub fn sample_standard_normal(stream: &Stream, idx: u64, slot: u32) -> f64 {
    let u1 = clamp_open(stream.uniform(idx, slot));
    let u2 = stream.uniform(idx, slot + 1);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// One-sided stable draw of index `gamma in (0, 1)` normalized so that
/// `E[exp(-lambda S)] = exp(-lambda^gamma)` exactly (Kanter's
/// trigonometric transform of one uniform and one exponential).
pub fn sample_one_sided_stable(gamma: f64, stream: &Stream, idx: u64) -> f64 {
    assert!(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
    let u = clamp_open(stream.uniform(idx, 0)) * PI;
    let w = sample_exponential(stream, idx, 1);
    let a = (gamma * u).sin() / u.sin().powf(1.0 / gamma);
    let b = (((1.0 - gamma) * u).sin() / w).powf((1.0 - gamma) / gamma);
    a * b
}
