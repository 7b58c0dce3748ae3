//! Two independent walks in one environment: joint regeneration levels,
//! intersection statistics, close-level sets, separation events, orthogonal
//! offsets, large-trap flags and crossing index sets.

use crate::env::{is_k_open, EnvConfig, EnvError, Point, MAX_DIM};
use crate::regen::{
    extract_with_analysis, pack_point, simulate_enhanced, EnhancedTrajectory, RegenError,
    RegenerationRecord, WalkAnalysis,
};
use crate::walk::Stream;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TwoWalkError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Regen(#[from] RegenError),
    #[error("the two walks must use distinct randomness streams")]
    IdenticalStreams,
    #[error("trajectory not recorded past level {0}")]
    HorizonTooShort(f64),
    #[error("no joint regeneration level found")]
    NoJointLevelFound,
}

/// Two enhanced walks sharing one environment, with disjoint streams.
#[derive(Debug, Clone)]
pub struct PairTrajectory {
    pub walk1: EnhancedTrajectory,
    pub walk2: EnhancedTrajectory,
}

/// Samples two conditionally independent walks in the same environment.
pub fn simulate_pair(
    cfg: &EnvConfig,
    u1: Point,
    u2: Point,
    streams: (Stream, Stream),
    steps: usize,
) -> Result<PairTrajectory, TwoWalkError> {
    if streams.0 == streams.1 {
        return Err(TwoWalkError::IdenticalStreams);
    }
    Ok(PairTrajectory {
        walk1: simulate_enhanced(cfg, u1, streams.0, steps)?,
        walk2: simulate_enhanced(cfg, u2, streams.1, steps)?,
    })
}

/// Outcome of the joint failure detector for one walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointOutcome {
    /// Steps after the walk's origin at which the event fired.
    Finite(usize),
    /// No event before the walk exceeded the level window.
    Censored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDReport {
    pub walk1: JointOutcome,
    pub walk2: JointOutcome,
    /// Smallest level window that contains a failure event; `None` when no
    /// event occurs within the recorded data (the proxy for infinity).
    pub m_estimate: Option<f64>,
}

struct JointOrigins {
    origin1: Point,
    origin2: Point,
    shifted1: Point,
    shifted2: Point,
}

impl JointOrigins {
    fn new(origin1: Point, origin2: Point) -> Result<JointOrigins, EnvError> {
        Ok(JointOrigins {
            origin1,
            origin2,
            shifted1: origin1.step(0, false)?,
            shifted2: origin2.step(0, false)?,
        })
    }

    /// Defect-channel vicinity: closed L1 ball of radius one around either
    /// origin.
    #[inline]
    fn in_vicinity(&self, p: &Point) -> bool {
        p.l1_distance(&self.origin1) <= 1 || p.l1_distance(&self.origin2) <= 1
    }

    /// Position trigger: the L1 balls around either origin shifted by -e1.
    #[inline]
    fn in_shifted_vicinity(&self, p: &Point) -> bool {
        p.l1_distance(&self.shifted1) <= 1 || p.l1_distance(&self.shifted2) <= 1
    }
}

fn joint_event_scan(
    cfg: &EnvConfig,
    etraj: &EnhancedTrajectory,
    origin_index: usize,
    origins: &JointOrigins,
    window_end: Option<usize>,
) -> Option<usize> {
    let origin_raw = cfg.ell.raw_level(&etraj.positions[origin_index]);
    let end = window_end.unwrap_or(etraj.positions.len()).min(etraj.positions.len());
    for idx in origin_index + 1..end {
        if cfg.ell.raw_level(&etraj.positions[idx]) <= origin_raw {
            return Some(idx - origin_index); // BACK
        }
        if origins.in_vicinity(&etraj.positions[idx - 1]) && etraj.bits[idx] == 0 {
            return Some(idx - origin_index); // ORI, defect channel
        }
        if origins.in_shifted_vicinity(&etraj.positions[idx]) {
            return Some(idx - origin_index); // ORI, position trigger
        }
    }
    None
}

/// Joint failure detector: for each walk, the first backtrack below its
/// origin level or vicinity trigger (defect step out of either origin's
/// vicinity, or entry into either origin's `-e1` vicinity), restricted to
/// the window before the walk exceeds level `r`. The `m_estimate` is the
/// smallest level window that would contain a failure event of either walk.
pub fn detect_joint_d(
    cfg: &EnvConfig,
    pair: &PairTrajectory,
    origin_times: (usize, usize),
    r: f64,
) -> Result<JointDReport, TwoWalkError> {
    let origins = JointOrigins::new(
        pair.walk1.positions[origin_times.0],
        pair.walk2.positions[origin_times.1],
    )?;
    let threshold = r * cfg.ell.norm();
    let mut outcomes = Vec::with_capacity(2);
    let mut m_global: Option<f64> = None;
    for (etraj, origin_index) in
        [(&pair.walk1, origin_times.0), (&pair.walk2, origin_times.1)]
    {
        // the window [origin, first time above level r)
        let mut window_end = None;
        for idx in origin_index..etraj.positions.len() {
            if (cfg.ell.raw_level(&etraj.positions[idx]) as f64) > threshold {
                window_end = Some(idx);
                break;
            }
        }
        let Some(window_end) = window_end else {
            return Err(TwoWalkError::HorizonTooShort(r));
        };
        let outcome = match joint_event_scan(cfg, etraj, origin_index, &origins, Some(window_end)) {
            Some(n) => JointOutcome::Finite(n),
            None => JointOutcome::Censored,
        };
        outcomes.push(outcome);
        // exact M for this walk: the running-max level at the first
        // unwindowed event, scanned over everything recorded
        if let Some(n) = joint_event_scan(cfg, etraj, origin_index, &origins, None) {
            let mut run_max = i64::MIN;
            for idx in origin_index..=origin_index + n {
                run_max = run_max.max(cfg.ell.raw_level(&etraj.positions[idx]));
            }
            let m = run_max as f64 / cfg.ell.norm();
            m_global = Some(m_global.map_or(m, |g: f64| g.min(m)));
        }
    }
    Ok(JointDReport { walk1: outcomes[0], walk2: outcomes[1], m_estimate: m_global })
}

/// A joint regeneration level with both walks' entries.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JointRegenRecord {
    pub k: usize,
    pub level: f64,
    pub entry_time1: usize,
    pub entry_time2: usize,
    pub point1: Vec<i16>,
    pub point2: Vec<i16>,
    pub censored: bool,
}

impl JointRegenRecord {
    pub fn entry1(&self) -> Point {
        Point::new(&self.point1)
    }

    pub fn entry2(&self) -> Point {
        Point::new(&self.point2)
    }
}

/// Per-walk pieces shared by the joint-level scan.
pub struct PairAnalysis {
    pub records1: Vec<RegenerationRecord>,
    pub records2: Vec<RegenerationRecord>,
    analysis1: WalkAnalysis,
    analysis2: WalkAnalysis,
}

impl PairAnalysis {
    pub fn build(
        cfg: &EnvConfig,
        pair: &PairTrajectory,
        confirm_distance: f64,
    ) -> Result<PairAnalysis, TwoWalkError> {
        let analysis1 = WalkAnalysis::build(cfg, &pair.walk1);
        let analysis2 = WalkAnalysis::build(cfg, &pair.walk2);
        let records1 =
            extract_with_analysis(&pair.walk1, cfg, &analysis1, confirm_distance, usize::MAX)?;
        let records2 =
            extract_with_analysis(&pair.walk2, cfg, &analysis2, confirm_distance, usize::MAX)?;
        Ok(PairAnalysis { records1, records2, analysis1, analysis2 })
    }
}

/// Candidate pair of per-walk regeneration points sharing a level window.
struct JointCandidate {
    level_raw: i64,
    rec1: usize,
    rec2: usize,
}

fn candidate_pairs(
    cfg: &EnvConfig,
    pair: &PairTrajectory,
    pa: &PairAnalysis,
) -> Vec<JointCandidate> {
    // A record r of a walk is the entry point into H+(L) exactly for L in
    // [previous running max, level of r); intersect the two interval
    // families.
    let intervals = |records: &[RegenerationRecord],
                     analysis: &WalkAnalysis,
                     start: &Point|
     -> Vec<(i64, i64, usize)> {
        let mut out = Vec::with_capacity(records.len());
        let mut prev_max = cfg.ell.raw_level(start);
        let mut cursor = 0usize;
        for (i, r) in records.iter().enumerate() {
            if r.censored {
                continue;
            }
            // running max strictly before the record time
            while cursor < r.tau {
                prev_max = prev_max.max(analysis.raw[cursor]);
                cursor += 1;
            }
            out.push((prev_max, cfg.ell.raw_level(&r.point), i));
        }
        out
    };
    let iv1 = intervals(&pa.records1, &pa.analysis1, &pair.walk1.start);
    let iv2 = intervals(&pa.records2, &pa.analysis2, &pair.walk2.start);
    let mut cands = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < iv1.len() && j < iv2.len() {
        let (lo1, hi1, r1) = iv1[i];
        let (lo2, hi2, r2) = iv2[j];
        let lo = lo1.max(lo2);
        let hi = hi1.min(hi2);
        if lo < hi {
            cands.push(JointCandidate { level_raw: lo, rec1: r1, rec2: r2 });
        }
        if hi1 <= hi2 {
            i += 1;
        } else {
            j += 1;
        }
    }
    cands
}

/// Joint regeneration levels: levels whose entry points are per-walk
/// regeneration points for both walks and whose joint failure detector
/// stays quiet until both walks gain `confirm_distance` beyond the higher
/// entry. The per-walk inclusion of entry times among regeneration times
/// holds by construction and is re-asserted.
pub fn joint_regeneration_levels(
    cfg: &EnvConfig,
    pair: &PairTrajectory,
    pa: &PairAnalysis,
    confirm_distance: f64,
) -> Result<Vec<JointRegenRecord>, TwoWalkError> {
    let taus1: HashSet<usize> = pa.records1.iter().map(|r| r.tau).collect();
    let taus2: HashSet<usize> = pa.records2.iter().map(|r| r.tau).collect();
    let mut out: Vec<JointRegenRecord> = Vec::new();
    for cand in candidate_pairs(cfg, pair, pa) {
        let r1 = &pa.records1[cand.rec1];
        let r2 = &pa.records2[cand.rec2];
        if !is_k_open(cfg, &r1.point) || !is_k_open(cfg, &r2.point) {
            continue;
        }
        if let Some(last) = out.last() {
            if (cand.level_raw as f64 / cfg.ell.norm()) <= last.level {
                continue;
            }
        }
        let top_entry = cfg.ell.level(&r1.point).max(cfg.ell.level(&r2.point));
        let r_star = top_entry + confirm_distance;
        let origins = JointOrigins::new(r1.point, r2.point)?;
        let mut confirmed = true;
        let mut censored = false;
        let mut failed = false;
        for (etraj, origin_index) in [(&pair.walk1, r1.tau), (&pair.walk2, r2.tau)] {
            let threshold = r_star * cfg.ell.norm();
            let mut window_end = None;
            for idx in origin_index..etraj.positions.len() {
                if (cfg.ell.raw_level(&etraj.positions[idx]) as f64) > threshold {
                    window_end = Some(idx);
                    break;
                }
            }
            let scan_end = window_end.unwrap_or(etraj.positions.len());
            match joint_event_scan(cfg, etraj, origin_index, &origins, Some(scan_end)) {
                Some(_) => {
                    failed = true;
                    break;
                }
                None => {
                    if window_end.is_none() {
                        confirmed = false;
                        censored = true;
                    }
                }
            }
        }
        if failed {
            continue;
        }
        if confirmed || censored {
            debug_assert!(taus1.contains(&r1.tau) && taus2.contains(&r2.tau));
            out.push(JointRegenRecord {
                k: out.len() + 1,
                level: cand.level_raw as f64 / cfg.ell.norm(),
                entry_time1: r1.tau,
                entry_time2: r2.tau,
                point1: r1.point.coords(cfg.d).to_vec(),
                point2: r2.point.coords(cfg.d).to_vec(),
                censored,
            });
        }
    }
    if !out.iter().any(|r| !r.censored) {
        return Err(TwoWalkError::NoJointLevelFound);
    }
    Ok(out)
}

/// Exact count of lattice sites in the tilted box `B_0(n, n^alpha)` whose
/// vicinity both walks visit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IntersectionReport {
    pub n: usize,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contributing_sites: Option<Vec<Vec<i16>>>,
}

fn in_tilted_box(cfg: &EnvConfig, z: &Point, l: f64, lp: f64) -> bool {
    let mut disp = [0f64; MAX_DIM];
    for i in 0..cfg.d {
        disp[i] = z.coord(i) as f64;
    }
    if cfg.ell.dot_unit(&disp[..cfg.d]).abs() > l + 1e-9 {
        return false;
    }
    for f in cfg.ell.orth_basis() {
        let o: f64 = (0..cfg.d).map(|i| disp[i] * f[i]).sum();
        if o.abs() > lp + 1e-9 {
            return false;
        }
    }
    true
}

/// All 2d + 1 lattice points of the closed L1 ball of radius one.
fn vicinity_points(cfg: &EnvConfig, p: &Point) -> Vec<Point> {
    let mut out = Vec::with_capacity(2 * cfg.d + 1);
    out.push(*p);
    for dir in 0..2 * cfg.d {
        if let Ok(q) = p.step(dir % cfg.d, dir < cfg.d) {
            out.push(q);
        }
    }
    out
}

/// Counts sites `z` in `B_0(n, n^alpha)` with both walks visiting the
/// vicinity of `z`; each site counts once.
pub fn intersection_count(
    cfg: &EnvConfig,
    pair: &PairTrajectory,
    n: usize,
    keep_sites: bool,
) -> IntersectionReport {
    let l = n as f64;
    let lp = (n as f64).powf(cfg.alpha);
    let visited1: HashSet<u128> =
        pair.walk1.positions.iter().map(|p| pack_point(p, cfg.d)).collect();
    let visited2: HashSet<u128> =
        pair.walk2.positions.iter().map(|p| pack_point(p, cfg.d)).collect();
    let visits_vicinity = |set: &HashSet<u128>, z: &Point| -> bool {
        vicinity_points(cfg, z).iter().any(|q| set.contains(&pack_point(q, cfg.d)))
    };
    let mut counted: HashSet<u128> = HashSet::new();
    let mut sites = Vec::new();
    // candidate z are within L1 distance one of walk1's path
    for p in &pair.walk1.positions {
        for z in vicinity_points(cfg, p) {
            let key = pack_point(&z, cfg.d);
            if counted.contains(&key) || !in_tilted_box(cfg, &z, l, lp) {
                continue;
            }
            if visits_vicinity(&visited1, &z) && visits_vicinity(&visited2, &z) {
                counted.insert(key);
                if keep_sites {
                    sites.push(z.coords(cfg.d).to_vec());
                }
            }
        }
    }
    IntersectionReport {
        n,
        count: counted.len(),
        contributing_sites: if keep_sites {
            sites.sort();
            Some(sites)
        } else {
            None
        },
    }
}

/// Indices `k` with level at most `n` whose entry points lie within
/// `n^{10 epsilon}` of each other in Euclidean distance.
pub fn close_jrl_set(records: &[JointRegenRecord], n: usize, epsilon: f64) -> Vec<usize> {
    let threshold = (n as f64).powf(10.0 * epsilon);
    records
        .iter()
        .filter(|r| !r.censored && r.level <= n as f64 + 1e-9)
        .filter(|r| {
            let d2: f64 = r
                .point1
                .iter()
                .zip(&r.point2)
                .map(|(&a, &b)| ((a - b) as f64) * ((a - b) as f64))
                .sum();
            d2.sqrt() <= threshold + 1e-9
        })
        .map(|r| r.k)
        .collect()
}

/// True iff every pair of times at which the walks sit within level
/// distance one of a common level in `[0, n]` keeps orthogonal offset at
/// least 3 along `u`.
pub fn separation_event(cfg: &EnvConfig, pair: &PairTrajectory, n: usize, u: &[f64]) -> bool {
    // bucket walk1 times by integer level
    let mut buckets: HashMap<i64, Vec<usize>> = HashMap::new();
    for (t, p) in pair.walk1.positions.iter().enumerate() {
        let lvl = cfg.ell.level(p);
        if lvl >= -1.0 - 1e-9 && lvl <= n as f64 + 1.0 + 1e-9 {
            buckets.entry(lvl.floor() as i64).or_default().push(t);
        }
    }
    let offset = |a: &Point, b: &Point| -> f64 {
        (0..cfg.d).map(|i| (a.coord(i) - b.coord(i)) as f64 * u[i]).sum()
    };
    for (t2, p2) in pair.walk2.positions.iter().enumerate() {
        let l2 = cfg.ell.level(p2);
        if l2 < -1.0 - 1e-9 || l2 > n as f64 + 1.0 + 1e-9 {
            continue;
        }
        let b2 = l2.floor() as i64;
        for b in (b2 - 3)..=(b2 + 3) {
            if let Some(times) = buckets.get(&b) {
                for &t1 in times {
                    let p1 = &pair.walk1.positions[t1];
                    let l1 = cfg.ell.level(p1);
                    // a common L in [0, n] with |l1 - L| <= 1 and |l2 - L| <= 1
                    let lo = (l1.max(l2) - 1.0).max(0.0);
                    let hi = (l1.min(l2) + 1.0).min(n as f64);
                    if lo <= hi + 1e-9 && offset(p1, p2).abs() < 3.0 {
                        let _ = t2;
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// First orthonormal direction of the complement of `v_hat`: the component
/// of e2 orthogonal to it (e1 as fallback when degenerate).
pub fn orthogonal_direction(v_hat: &[f64]) -> Vec<f64> {
    let d = v_hat.len();
    let norm = v_hat.iter().map(|x| x * x).sum::<f64>().sqrt();
    let v0: Vec<f64> = v_hat.iter().map(|x| x / norm).collect();
    for axis in [1usize, 0] {
        let mut u = vec![0.0; d];
        u[axis] = 1.0;
        let proj: f64 = (0..d).map(|i| u[i] * v0[i]).sum();
        for i in 0..d {
            u[i] -= proj * v0[i];
        }
        let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return u.into_iter().map(|x| x / n).collect();
        }
    }
    let mut u = vec![0.0; d];
    u[1] = 1.0;
    u
}

/// Offsets `O_j = <X1_{tau_j} - X2_{tau_j}, u>`; index 0 uses the starts.
/// Unequal record counts truncate to the shorter sequence and set the flag.
pub fn orthogonal_offsets(
    starts: (&Point, &Point),
    records1: &[RegenerationRecord],
    records2: &[RegenerationRecord],
    u: &[f64],
) -> (Vec<f64>, bool) {
    let c1: Vec<&RegenerationRecord> = records1.iter().filter(|r| !r.censored).collect();
    let c2: Vec<&RegenerationRecord> = records2.iter().filter(|r| !r.censored).collect();
    let m = c1.len().min(c2.len());
    let truncated = c1.len() != c2.len();
    let dot = |a: &Point, b: &Point| -> f64 {
        (0..u.len()).map(|i| (a.coord(i) - b.coord(i)) as f64 * u[i]).sum()
    };
    let mut out = Vec::with_capacity(m + 1);
    out.push(dot(starts.0, starts.1));
    for j in 0..m {
        out.push(dot(&c1[j].point, &c2[j].point));
    }
    (out, truncated)
}

/// Large-trap flags per regeneration interval: interval `i` (between
/// records `i` and `i + 1`, with interval 0 ending at the first record) is
/// flagged when some edge first touched during it has base conductance at
/// least `t`. An edge is touched when the walk occupies either endpoint.
pub fn large_trap_flags(
    cfg: &EnvConfig,
    etraj: &EnhancedTrajectory,
    records: &[RegenerationRecord],
    t: f64,
) -> Vec<bool> {
    let taus: Vec<usize> = records.iter().filter(|r| !r.censored).map(|r| r.tau).collect();
    let mut flags = vec![false; taus.len() + 1];
    let mut seen: HashSet<(u128, usize)> = HashSet::new();
    let interval_of = |s: usize| -> usize {
        taus.partition_point(|&tau| tau <= s)
    };
    for (s, p) in etraj.positions.iter().enumerate() {
        for dir in 0..2 * cfg.d {
            let axis = dir % cfg.d;
            let Ok(q) = p.step(axis, dir < cfg.d) else { continue };
            let e = if dir < cfg.d {
                (pack_point(p, cfg.d), axis)
            } else {
                (pack_point(&q, cfg.d), axis)
            };
            if seen.insert(e) {
                let edge = crate::env::canonical_edge(*p, q).expect("neighbours");
                if crate::env::base_conductance(cfg, &edge) >= t {
                    flags[interval_of(s)] = true;
                }
            }
        }
    }
    flags
}

/// Complement index set of flagged intervals at threshold `n^{3/(4 gamma)}`:
/// indices `j = 1..=n` whose interval carries no conductance that large.
pub fn l_small(
    cfg: &EnvConfig,
    etraj: &EnhancedTrajectory,
    records: &[RegenerationRecord],
    n: usize,
) -> Result<Vec<usize>, RegenError> {
    let confirmed = records.iter().filter(|r| !r.censored).count();
    if confirmed < n + 1 {
        return Err(RegenError::InsufficientRecords { need: n + 1, have: confirmed });
    }
    let threshold = (n as f64).powf(3.0 / (4.0 * cfg.gamma));
    let flags = large_trap_flags(cfg, etraj, records, threshold);
    Ok((1..=n).filter(|&j| !flags[j]).collect())
}

/// Crossing index sets: `J1` holds the indices `j <= n` whose block of
/// walk 1 (positions between records `j` and `j+1`, right end exclusive)
/// meets walk 2's path up to its n-th record, and symmetrically for `J2`.
pub fn crossing_index_sets(
    cfg: &EnvConfig,
    pair: &PairTrajectory,
    records1: &[RegenerationRecord],
    records2: &[RegenerationRecord],
    n: usize,
) -> Result<(Vec<usize>, Vec<usize>), RegenError> {
    let c1: Vec<usize> = records1.iter().filter(|r| !r.censored).map(|r| r.tau).collect();
    let c2: Vec<usize> = records2.iter().filter(|r| !r.censored).map(|r| r.tau).collect();
    if c1.len() < n + 1 || c2.len() < n + 1 {
        return Err(RegenError::InsufficientRecords {
            need: n + 1,
            have: c1.len().min(c2.len()),
        });
    }
    let set_of = |positions: &[Point], upto: usize| -> HashSet<u128> {
        positions[..=upto].iter().map(|p| pack_point(p, cfg.d)).collect()
    };
    let path2 = set_of(&pair.walk2.positions, c2[n - 1]);
    let path1 = set_of(&pair.walk1.positions, c1[n - 1]);
    let slab_hits = |positions: &[Point], taus: &[usize], other: &HashSet<u128>| -> Vec<usize> {
        let mut out = Vec::new();
        for j in 1..=n {
            let from = taus[j - 1];
            let to = if j < taus.len() { taus[j] } else { positions.len() };
            let hit = positions[from..to]
                .iter()
                .any(|p| other.contains(&pack_point(p, cfg.d)));
            if hit {
                out.push(j);
            }
        }
        out
    };
    Ok((
        slab_hits(&pair.walk1.positions, &c1, &path2),
        slab_hits(&pair.walk2.positions, &c2, &path1),
    ))
}
