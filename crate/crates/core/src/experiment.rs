//! Batch experiment drivers shared by the CLI and the acceptance suite.
//!
//! Every batch derives its randomness from `(cfg.seed, replica id)` through
//! counter-based streams and reduces results in replica order, so outputs
//! are identical for any worker count.

use crate::env::{inv_scale, EnvConfig, Point};
use crate::regen::{RegenError, RegenSession, RegenerationRecord};
use crate::stats::{ks_distance, sample_one_sided_stable};
use crate::twowalk::{
    close_jrl_set, intersection_count, joint_regeneration_levels, orthogonal_direction,
    separation_event, PairAnalysis, PairTrajectory, TwoWalkError,
};
use crate::walk::Stream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Runs one replica to `target` confirmed regenerations through a
/// streaming session. Returns the records and the steps consumed.
pub fn collect_records(
    cfg: &EnvConfig,
    stream: Stream,
    target: usize,
    confirm_distance: f64,
    max_steps: usize,
) -> Result<(Vec<RegenerationRecord>, u64), RegenError> {
    let session = RegenSession::new(cfg, Point::origin(), stream, confirm_distance)?;
    session.run(target, max_steps)
}

/// Confirmed regeneration times `tau_1 .. tau_m` of one replica.
pub fn confirmed_taus(records: &[RegenerationRecord]) -> Vec<usize> {
    records.iter().filter(|r| !r.censored).map(|r| r.tau).collect()
}

/// Per-replica regeneration batches, replica-ordered.
pub fn regen_batch(
    cfg: &EnvConfig,
    replicas: usize,
    target: usize,
    confirm_distance: f64,
    max_steps: usize,
) -> Vec<Result<Vec<RegenerationRecord>, RegenError>> {
    (0..replicas)
        .into_par_iter()
        .map(|id| {
            collect_records(cfg, Stream::new(cfg.seed, id as u64), target, confirm_distance, max_steps)
                .map(|(r, _)| r)
        })
        .collect()
}

/// Clock marginals of one scale: the exactly observed samples of
/// `S_n(1) = tau_n / Inv(n)`, the number of step-capped runs (whose value
/// is only known to exceed `s_cap`), the fitted scale against the stable
/// oracle and a KS bound valid under that censoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClockScale {
    pub n: usize,
    pub samples: Vec<f64>,
    pub censored: usize,
    /// Lower bound on every censored sample: `max_steps / Inv(n)`.
    pub s_cap: f64,
    pub c_hat: f64,
    pub c_hat_ci: (f64, f64),
    /// `max(sup_{x < s_cap} |F_hat - G|, censored fraction, oracle tail
    /// beyond the cap)`; equals the plain KS distance when nothing is
    /// censored and the cap exceeds both supports.
    pub ks_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClockReport {
    pub scales: Vec<ClockScale>,
    pub runs: usize,
}

fn median_with_ci(sorted: &[f64], total: usize) -> Option<(f64, f64, f64)> {
    // order-statistic interval for the median; `total` may exceed the
    // sorted (exact) sample when the top of the distribution is censored.
    let half = 1.96 * (total as f64).sqrt() / 2.0;
    let lo = ((total as f64 / 2.0 - half).floor().max(0.0)) as usize;
    let hi = (total as f64 / 2.0 + half).ceil() as usize;
    let med_idx = total / 2;
    if hi >= sorted.len() || med_idx >= sorted.len() {
        return None;
    }
    Some((sorted[lo], sorted[med_idx], sorted[hi]))
}

/// Sup-distance between the empirical CDF of `exact ∪ {censored values
/// above cap}` and the sorted reference sample, evaluated below `cap` where
/// the empirical CDF is known exactly, plus the tail bound above the cap.
fn ks_bound_with_censoring(
    exact_sorted: &[f64],
    censored: usize,
    cap: f64,
    reference_sorted: &[f64],
) -> f64 {
    let n = (exact_sorted.len() + censored) as f64;
    let m = reference_sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut j = 0usize;
    for (i, &x) in exact_sorted.iter().enumerate() {
        if x >= cap {
            break;
        }
        while j < reference_sorted.len() && reference_sorted[j] <= x {
            j += 1;
        }
        let f_emp_after = (i + 1) as f64 / n;
        let f_emp_before = i as f64 / n;
        let g = j as f64 / m;
        d = d.max((f_emp_after - g).abs()).max((f_emp_before - g).abs());
    }
    // reference jumps between consecutive exact samples
    let mut i = 0usize;
    for (j, &y) in reference_sorted.iter().enumerate() {
        if y >= cap {
            break;
        }
        while i < exact_sorted.len() && exact_sorted[i] <= y {
            i += 1;
        }
        d = d.max((i as f64 / n - (j + 1) as f64 / m).abs());
    }
    let cens_frac = censored as f64 / n;
    let ref_tail = reference_sorted.partition_point(|&y| y <= cap) as f64 / m;
    d.max(cens_frac).max(1.0 - ref_tail)
}

/// Scaling experiment for the clock: every run is driven to the largest
/// scale in `n_grid`, and each scale reads its own marginal from the same
/// regeneration sequence. Step-capped runs enter each scale as censored
/// observations. The stable oracle sample is drawn once from a dedicated
/// stream; the empirical scale constant is fitted by the ratio of medians.
pub fn clock_experiment(
    cfg: &EnvConfig,
    runs: usize,
    n_grid: &[usize],
    confirm_distance: f64,
    max_steps: usize,
    oracle_draws: usize,
) -> Result<ClockReport, RegenError> {
    let n_max = *n_grid.iter().max().expect("non-empty grid");
    let per_run: Vec<Vec<usize>> = (0..runs)
        .into_par_iter()
        .map(|id| {
            collect_records(
                cfg,
                Stream::new(cfg.seed, id as u64),
                n_max,
                confirm_distance,
                max_steps,
            )
            .map(|(records, _)| confirmed_taus(&records))
            .unwrap_or_default()
        })
        .collect();
    let oracle_stream =
        Stream::new(crate::env::mix64(cfg.seed ^ STABLE_ORACLE_DOMAIN), u64::MAX);
    let mut oracle: Vec<f64> = (0..oracle_draws)
        .map(|i| sample_one_sided_stable(cfg.gamma, &oracle_stream, i as u64))
        .collect();
    oracle.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let oracle_median = oracle[oracle.len() / 2];
    let mut scales = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let inv_n = inv_scale(n as f64, cfg.gamma)?;
        let s_cap = max_steps as f64 / inv_n;
        let mut samples = Vec::new();
        let mut censored = 0usize;
        for taus in &per_run {
            if taus.len() >= n {
                samples.push(taus[n - 1] as f64 / inv_n);
            } else {
                censored += 1;
            }
        }
        if samples.is_empty() {
            return Err(RegenError::NoRegenerationFound);
        }
        let mut sorted = samples.clone();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let total = sorted.len() + censored;
        let Some((lo, med, hi)) = median_with_ci(&sorted, total) else {
            return Err(RegenError::Inconsistent(
                "more than half of the clock runs were step-capped".into(),
            ));
        };
        // scale fit: minimize the (censoring-aware) KS over the scale,
        // seeded by the median ratio
        let c_med = med / oracle_median;
        let eval = |c: f64| -> f64 {
            let rescaled: Vec<f64> = sorted.iter().map(|s| s / c).collect();
            ks_bound_with_censoring(&rescaled, censored, s_cap / c, &oracle)
        };
        let mut c_hat = c_med;
        let mut ks = eval(c_med);
        for step in 0..57 {
            let c = c_med * (-0.7 + 0.025 * step as f64).exp();
            let d = eval(c);
            if d < ks {
                ks = d;
                c_hat = c;
            }
        }
        scales.push(ClockScale {
            n,
            samples,
            censored,
            s_cap,
            c_hat,
            c_hat_ci: (c_hat * lo / med, c_hat * hi / med),
            ks_distance: ks,
        });
    }
    Ok(ClockReport { scales, runs })
}

// the stable oracle draws from its own seed domain so experiment replicas
// never overlap with it
const STABLE_ORACLE_DOMAIN: u64 = 0x0B5E_55ED_0AC1_E000;

/// One output row of the pair experiment: all statistics of one pair at
/// one box scale.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairRow {
    pub pair_id: usize,
    pub n: usize,
    pub intersections: usize,
    pub close_jrl: usize,
    pub separated: bool,
    pub j1: usize,
    pub j2: usize,
    pub censored1: bool,
    pub censored2: bool,
}

#[derive(Debug, Clone)]
pub struct PairParams {
    pub n_grid: Vec<usize>,
    pub epsilon: f64,
    pub confirm_distance: f64,
    pub max_steps: usize,
    /// Extra level headroom past the largest box scale.
    pub level_buffer: f64,
    /// Record-count cap for the crossing index sets.
    pub crossing_cap: usize,
}

impl Default for PairParams {
    fn default() -> Self {
        PairParams {
            n_grid: vec![64, 128, 256, 512],
            epsilon: 0.05,
            confirm_distance: 16.0,
            max_steps: 6_000_000,
            level_buffer: 24.0,
            crossing_cap: 48,
        }
    }
}

/// Simulates one enhanced walk until its level exceeds `target_level` (or
/// the step budget runs out; the flag reports which).
pub fn simulate_until_level(
    cfg: &EnvConfig,
    x0: Point,
    stream: Stream,
    target_level: f64,
    max_steps: usize,
) -> Result<(crate::regen::EnhancedTrajectory, bool), RegenError> {
    let mut stepper = crate::regen::EnhancedStepper::new(cfg, x0, stream)?;
    let mut traj = crate::regen::EnhancedTrajectory {
        start: x0,
        positions: vec![x0],
        bits: vec![1],
        defect_flags: vec![0],
        rng_stream_id: stream.id,
    };
    let threshold = target_level * cfg.ell.norm();
    let mut reached = false;
    while traj.positions.len() <= max_steps {
        let (p, bit) = stepper.step()?;
        traj.positions.push(p);
        traj.bits.push(bit);
        traj.defect_flags.push(1 - bit);
        if (cfg.ell.raw_level(&p) as f64) > threshold {
            reached = true;
            break;
        }
    }
    Ok((traj, reached))
}

/// Runs one pair and evaluates every per-scale statistic.
pub fn run_pair(
    cfg: &EnvConfig,
    pair_id: usize,
    params: &PairParams,
) -> Result<Vec<PairRow>, TwoWalkError> {
    let n_max = *params.n_grid.iter().max().expect("non-empty grid") as f64;
    let target = n_max + params.level_buffer + params.confirm_distance;
    let s1 = Stream::new(cfg.seed, 2 * pair_id as u64);
    let s2 = Stream::new(cfg.seed, 2 * pair_id as u64 + 1);
    if s1 == s2 {
        return Err(TwoWalkError::IdenticalStreams);
    }
    let (walk1, reached1) =
        simulate_until_level(cfg, Point::origin(), s1, target, params.max_steps)?;
    let (walk2, reached2) =
        simulate_until_level(cfg, Point::origin(), s2, target, params.max_steps)?;
    let pair = PairTrajectory { walk1, walk2 };
    let pa = PairAnalysis::build(cfg, &pair, params.confirm_distance)?;
    let jrl = joint_regeneration_levels(cfg, &pair, &pa, params.confirm_distance)
        .unwrap_or_default();
    // separation direction from the pooled drift estimate
    let drift = crate::regen::estimate_drift(&pa.records1, cfg.d)
        .or_else(|_| crate::regen::estimate_drift(&pa.records2, cfg.d))
        .unwrap_or_else(|_| cfg.ell.unit().to_vec());
    let u = orthogonal_direction(&drift);
    // crossing sets at the deepest shared record count
    let m1 = pa.records1.iter().filter(|r| !r.censored).count();
    let m2 = pa.records2.iter().filter(|r| !r.censored).count();
    let crossing_n = params.crossing_cap.min(m1.saturating_sub(1)).min(m2.saturating_sub(1));
    let (j1, j2) = if crossing_n >= 1 {
        crate::twowalk::crossing_index_sets(cfg, &pair, &pa.records1, &pa.records2, crossing_n)?
    } else {
        (Vec::new(), Vec::new())
    };
    let mut rows = Vec::with_capacity(params.n_grid.len());
    for &n in &params.n_grid {
        let inter = intersection_count(cfg, &pair, n, false);
        rows.push(PairRow {
            pair_id,
            n,
            intersections: inter.count,
            close_jrl: close_jrl_set(&jrl, n, params.epsilon).len(),
            separated: separation_event(cfg, &pair, n, &u),
            j1: j1.len(),
            j2: j2.len(),
            censored1: !reached1,
            censored2: !reached2,
        });
    }
    Ok(rows)
}

/// The pair batch, replica-ordered; failed pairs are skipped with their ids
/// reported.
pub fn pair_batch(
    cfg: &EnvConfig,
    pairs: usize,
    params: &PairParams,
) -> (Vec<PairRow>, Vec<usize>) {
    let results: Vec<(usize, Result<Vec<PairRow>, TwoWalkError>)> = (0..pairs)
        .into_par_iter()
        .map(|id| (id, run_pair(cfg, id, params)))
        .collect();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(mut rs) => rows.append(&mut rs),
            Err(_) => failed.push(id),
        }
    }
    (rows, failed)
}

/// Mean of a per-scale statistic over pairs, as `(n, mean)` points.
pub fn mean_by_scale<F: Fn(&PairRow) -> f64>(rows: &[PairRow], f: F) -> Vec<(f64, f64)> {
    let mut by_n: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for r in rows {
        let e = by_n.entry(r.n).or_insert((0.0, 0));
        e.0 += f(r);
        e.1 += 1;
    }
    by_n.into_iter().map(|(n, (sum, cnt))| (n as f64, sum / cnt as f64)).collect()
}
