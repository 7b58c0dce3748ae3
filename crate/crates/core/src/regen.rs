//! Enhanced walk, regeneration detection and the rescaled processes.
//!
//! The enhanced walk carries one auxiliary bit per step recording whether the
//! step was drawn from the clamped sub-kernel (the K-channel) or from the
//! defect channel. A regeneration candidate is a strict running maximum of
//! the level at a K-open point; it survives when neither backtracking below
//! its level (`BACK`) nor a defect step taken from its vicinity (`ORI`)
//! occurs before the walk gains a configurable confirmation distance. The
//! confirmed times split the path into blocks whose increments are
//! heavy-tailed with the conductance tail exponent.

use crate::env::{
    inv_scale, is_k_open, ClampMode, EnvConfig, EnvError, Point,
};
use crate::walk::{direction_factors, guard_window, local_kernel_with, Stream};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegenError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("trajectory ends before the requested horizon")]
    HorizonTooShort,
    #[error("no confirmed regeneration within the horizon")]
    NoRegenerationFound,
    #[error("not enough confirmed records: need {need}, have {have}")]
    InsufficientRecords { need: usize, have: usize },
    #[error("grid does not extend far enough for the shift")]
    GridTooShort,
    #[error("internal consistency violation: {0}")]
    Inconsistent(String),
}

/// Walk positions together with the channel bit of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedTrajectory {
    pub start: Point,
    pub positions: Vec<Point>,
    /// `bits[n] = 1` iff step `n` (the move into `positions[n]`) came from
    /// the K-channel; `bits[0]` is fixed to 1 for the starting point.
    pub bits: Vec<u8>,
    /// Complement of `bits` for n >= 1.
    pub defect_flags: Vec<u8>,
    pub rng_stream_id: u64,
}

impl EnhancedTrajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// The full kernel at `x` split into K-channel and defect masses, in the
/// canonical neighbour order. Weights are relative (the common factor
/// `exp(2 x . ell)` is cancelled), which leaves every ratio intact.
#[derive(Debug, Clone)]
pub struct EnhancedKernel {
    pub neighbors: Vec<Point>,
    pub p: Vec<f64>,
    pub p_k: Vec<f64>,
    pub defect: Vec<f64>,
}

impl EnhancedKernel {
    pub fn k_channel_mass(&self) -> f64 {
        self.p_k.iter().sum()
    }
}

/// Sub-kernel of the enhanced walk.
///
/// `Printed` mode evaluates `(c_*(x,y) ∧ K^{-1}) e^{(x+y).l}` over
/// `Σ_z (c_*(x,z) ∨ K) e^{(x+z).l}`; at a K-open point this is the
/// deterministic kernel `K^{-2} e^{(x+y).l} / Σ_z e^{(x+z).l}` and it is
/// dominated by the full kernel everywhere. `Capped` mode swaps the clamps
/// (numerator floored at `K^{-1}`, denominator capped at `K`) and caps the
/// result at the full kernel so the defect mass stays non-negative; with
/// base conductances supported on [1, inf) it keeps the full mass in the
/// K-channel.
pub fn enhanced_kernel(cfg: &EnvConfig, x: &Point) -> Result<EnhancedKernel, RegenError> {
    let dir_f = direction_factors(cfg);
    enhanced_kernel_with(cfg, x, &dir_f)
}

pub(crate) fn enhanced_kernel_with(
    cfg: &EnvConfig,
    x: &Point,
    dir_f: &[f64],
) -> Result<EnhancedKernel, RegenError> {
    let k = local_kernel_with(cfg, x, dir_f).map_err(|e| match e {
        crate::walk::WalkError::Env(err) => RegenError::Env(err),
    })?;
    let kk = cfg.k;
    let mut num = Vec::with_capacity(k.neighbors.len());
    let mut den = 0.0;
    match cfg.clamp {
        ClampMode::Printed => {
            for (j, &c) in k.base.iter().enumerate() {
                num.push(c.min(1.0 / kk) * dir_f[j]);
                den += c.max(kk) * dir_f[j];
            }
        }
        ClampMode::Capped => {
            for (j, &c) in k.base.iter().enumerate() {
                num.push(c.max(1.0 / kk) * dir_f[j]);
                den += c.min(kk) * dir_f[j];
            }
        }
    }
    let mut p = Vec::with_capacity(k.neighbors.len());
    let mut p_k = Vec::with_capacity(k.neighbors.len());
    let mut defect = Vec::with_capacity(k.neighbors.len());
    for j in 0..k.neighbors.len() {
        let pj = k.weights[j] / k.total;
        let mut pkj = num[j] / den;
        if cfg.clamp == ClampMode::Capped {
            pkj = pkj.min(pj);
        }
        p.push(pj);
        p_k.push(pkj);
        defect.push((pj - pkj).max(0.0));
    }
    Ok(EnhancedKernel { neighbors: k.neighbors, p, p_k, defect })
}

/// Samples the enhanced walk. The position marginal equals the plain walk's
/// law; slot 0 of each step drives the position (coupling with
/// `walk::simulate_path`) and slot 1 resolves the channel.
pub fn simulate_enhanced(
    cfg: &EnvConfig,
    x0: Point,
    stream: Stream,
    steps: usize,
) -> Result<EnhancedTrajectory, RegenError> {
    let mut out = EnhancedTrajectory {
        start: x0,
        positions: Vec::with_capacity(steps + 1),
        bits: Vec::with_capacity(steps + 1),
        defect_flags: Vec::with_capacity(steps + 1),
        rng_stream_id: stream.id,
    };
    out.positions.push(x0);
    out.bits.push(1);
    out.defect_flags.push(0);
    let mut sim = EnhancedStepper::new(cfg, x0, stream)?;
    for _ in 0..steps {
        let (p, bit) = sim.step()?;
        out.positions.push(p);
        out.bits.push(bit);
        out.defect_flags.push(1 - bit);
    }
    Ok(out)
}

/// Cached local kernel of one site: cumulative weights for position
/// selection plus the per-direction channel ratios.
#[derive(Clone)]
struct SiteKernel {
    site: Point,
    neighbors: [Point; 2 * crate::env::MAX_DIM],
    cum_weights: [f64; 2 * crate::env::MAX_DIM],
    ratio: [f64; 2 * crate::env::MAX_DIM],
    total: f64,
}

/// Incremental enhanced-walk generator; `extend` keeps the counter-based
/// stream aligned so chunked generation replays bit-exactly. The two most
/// recent site kernels are cached: a walk dwelling on a high-conductance
/// edge alternates between two sites, so the cache carries almost every
/// trapped step.
pub struct EnhancedStepper<'a> {
    cfg: &'a EnvConfig,
    sampler: crate::env::FieldSampler,
    dir_f: [f64; 2 * crate::env::MAX_DIM],
    kk: f64,
    x: Point,
    step: u64,
    stream: Stream,
    cache: [Option<SiteKernel>; 2],
    cache_next: usize,
}

impl<'a> EnhancedStepper<'a> {
    pub fn new(cfg: &'a EnvConfig, x0: Point, stream: Stream) -> Result<Self, RegenError> {
        let mut dir_f = [0f64; 2 * crate::env::MAX_DIM];
        for (j, f) in direction_factors(cfg).into_iter().enumerate() {
            dir_f[j] = f;
        }
        Ok(EnhancedStepper {
            cfg,
            sampler: crate::env::FieldSampler::new(cfg),
            dir_f,
            kk: cfg.k,
            x: x0,
            step: 0,
            stream,
            cache: [None, None],
            cache_next: 0,
        })
    }

    pub fn position(&self) -> Point {
        self.x
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn build_kernel(&self, x: &Point) -> Result<SiteKernel, RegenError> {
        let m = 2 * self.cfg.d;
        let mut cs = [0f64; 2 * crate::env::MAX_DIM];
        let mut neighbors = [Point::origin(); 2 * crate::env::MAX_DIM];
        self.sampler.incident_into(x, &mut cs, &mut neighbors)?;
        let mut cum_weights = [0f64; 2 * crate::env::MAX_DIM];
        let mut weights = [0f64; 2 * crate::env::MAX_DIM];
        let mut total = 0.0;
        for j in 0..m {
            let w = cs[j] * self.dir_f[j];
            weights[j] = w;
            total += w;
            cum_weights[j] = total;
        }
        let mut ratio = [1.0f64; 2 * crate::env::MAX_DIM];
        match self.cfg.clamp {
            ClampMode::Printed => {
                let mut den = 0.0;
                for l in 0..m {
                    den += cs[l].max(self.kk) * self.dir_f[l];
                }
                for j in 0..m {
                    let num = cs[j].min(1.0 / self.kk) * self.dir_f[j];
                    ratio[j] = (num * total) / (weights[j] * den);
                }
            }
            ClampMode::Capped => {
                let mut den = 0.0;
                for l in 0..m {
                    den += cs[l].min(self.kk) * self.dir_f[l];
                }
                for j in 0..m {
                    let num = cs[j].max(1.0 / self.kk) * self.dir_f[j];
                    ratio[j] = ((num * total) / (weights[j] * den)).min(1.0);
                }
            }
        }
        Ok(SiteKernel { site: *x, neighbors, cum_weights, ratio, total })
    }

    fn kernel_at(&mut self, x: &Point) -> Result<usize, RegenError> {
        for (slot, entry) in self.cache.iter().enumerate() {
            if let Some(k) = entry {
                if k.site == *x {
                    return Ok(slot);
                }
            }
        }
        let built = self.build_kernel(x)?;
        let slot = self.cache_next;
        self.cache[slot] = Some(built);
        self.cache_next = 1 - self.cache_next;
        Ok(slot)
    }

    pub fn step(&mut self) -> Result<(Point, u8), RegenError> {
        guard_window(&self.x, self.cfg.d)?;
        let m = 2 * self.cfg.d;
        let x = self.x;
        let slot = self.kernel_at(&x)?;
        let kernel = self.cache[slot].as_ref().expect("cached kernel");
        let u = self.stream.uniform(self.step, 0) * kernel.total;
        let mut j = m - 1;
        for (idx, &cw) in kernel.cum_weights[..m].iter().enumerate() {
            if u < cw {
                j = idx;
                break;
            }
        }
        let ratio = kernel.ratio[j];
        let next = kernel.neighbors[j];
        let bit = if ratio >= 1.0 || self.stream.uniform(self.step, 1) < ratio { 1 } else { 0 };
        self.x = next;
        self.step += 1;
        Ok((self.x, bit))
    }

    pub fn extend(&mut self, traj: &mut EnhancedTrajectory, steps: usize) -> Result<(), RegenError> {
        for _ in 0..steps {
            let (p, bit) = self.step()?;
            traj.positions.push(p);
            traj.bits.push(bit);
            traj.defect_flags.push(1 - bit);
        }
        Ok(())
    }
}

/// Outcome of the regeneration-failure detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DOutcome {
    /// The number of steps after the origin at which the event fired.
    Finite(usize),
    /// Neither condition occurred within the horizon.
    CensoredInfinite,
}

/// First failure `D = BACK ∧ ORI` after `origin_index`.
///
/// `BACK` is the first `n >= 1` with the level of `X_{o+n}` at or below the
/// origin level; `ORI` is the first `n >= 1` whose step starts inside the
/// origin vicinity and uses the defect channel.
pub fn detect_d(
    etraj: &EnhancedTrajectory,
    cfg: &EnvConfig,
    origin_index: usize,
    horizon: usize,
) -> Result<DOutcome, RegenError> {
    if origin_index + horizon >= etraj.positions.len() {
        return Err(RegenError::HorizonTooShort);
    }
    let origin = etraj.positions[origin_index];
    let origin_raw = cfg.ell.raw_level(&origin);
    for n in 1..=horizon {
        let idx = origin_index + n;
        if cfg.ell.raw_level(&etraj.positions[idx]) <= origin_raw {
            return Ok(DOutcome::Finite(n)); // BACK
        }
        if etraj.positions[idx - 1].l1_distance(&origin) <= 1 && etraj.bits[idx] == 0 {
            return Ok(DOutcome::Finite(n)); // ORI
        }
    }
    Ok(DOutcome::CensoredInfinite)
}

/// A detected regeneration time.
#[derive(Debug, Clone, PartialEq)]
pub struct RegenerationRecord {
    /// 1-based index among the emitted records.
    pub k: usize,
    pub tau: usize,
    pub point: Point,
    /// Smallest tilted-box radius containing the block ending at `tau`.
    pub chi: u32,
    /// True when the trajectory (or step horizon) ended before the
    /// confirmation distance was reached.
    pub censored: bool,
}

/// Packs a point into a sortable 128-bit key (16 bits per axis).
#[inline]
pub(crate) fn pack_point(p: &Point, d: usize) -> u128 {
    let mut key = 0u128;
    for i in 0..d {
        key |= (p.coord(i) as u16 as u128) << (16 * i);
    }
    key
}

/// Sorted position -> visit times index over one trajectory.
pub(crate) struct VisitIndex {
    entries: Vec<(u128, u32)>,
}

impl VisitIndex {
    pub(crate) fn build(positions: &[Point], d: usize) -> VisitIndex {
        let mut entries: Vec<(u128, u32)> = positions
            .iter()
            .enumerate()
            .map(|(t, p)| (pack_point(p, d), t as u32))
            .collect();
        entries.sort_unstable();
        VisitIndex { entries }
    }

    /// Range of entries for `key`, as indexes into the sorted array.
    fn range(&self, key: u128) -> (usize, usize) {
        let lo = self.entries.partition_point(|&(k, _)| k < key);
        let hi = self.entries.partition_point(|&(k, _)| k <= key);
        (lo, hi)
    }

    /// Earliest `n = s + 1` over visits `s >= t` to `p` with `bits[n] == 0`,
    /// using the next-zero-bit table to jump over runs of channel-1 steps.
    fn first_defect_departure(
        &self,
        p: &Point,
        d: usize,
        t: u32,
        next_zero: &[u32],
        len: usize,
    ) -> Option<u32> {
        let key = pack_point(p, d);
        let (lo, hi) = self.range(key);
        let mut idx = self.entries[lo..hi].partition_point(|&(_, s)| s < t) + lo;
        while idx < hi {
            let s = self.entries[idx].1 as usize;
            if s + 1 >= len {
                return None;
            }
            let nz = next_zero[s + 1] as usize;
            if nz >= len {
                return None;
            }
            if nz == s + 1 {
                return Some((s + 1) as u32);
            }
            // Jump to the first visit that can produce the defect step nz.
            let target = (nz - 1) as u32;
            let off = self.entries[idx..hi].partition_point(|&(_, s2)| s2 < target);
            let nidx = idx + off;
            if nidx == idx {
                // already past target; advance one to make progress
                idx += 1;
            } else {
                idx = nidx;
            }
        }
        None
    }
}

/// Shared per-trajectory arrays used by detection sweeps. The defect-step
/// index is only materialized when the trajectory carries any defect step;
/// in capped clamp mode it never does and the memory is saved.
pub(crate) struct WalkAnalysis {
    pub(crate) raw: Vec<i64>,
    /// Times of the strict running maxima, increasing.
    max_times: Vec<u32>,
    /// Levels of the strict running maxima (same order, increasing).
    max_raw: Vec<i64>,
    /// For each index, the next index with `raw <= raw[i]`; `len` if none.
    pub(crate) next_leq: Vec<u32>,
    /// For each index, the next index `n >= i` with `bits[n] == 0`.
    next_zero: Option<Vec<u32>>,
    visits: Option<VisitIndex>,
}

impl WalkAnalysis {
    pub(crate) fn build(cfg: &EnvConfig, etraj: &EnhancedTrajectory) -> WalkAnalysis {
        let len = etraj.positions.len();
        let raw: Vec<i64> = etraj.positions.iter().map(|p| cfg.ell.raw_level(p)).collect();
        let mut max_times = Vec::new();
        let mut max_raw = Vec::new();
        let mut m = i64::MIN;
        for (i, &r) in raw.iter().enumerate() {
            if r > m {
                m = r;
                max_times.push(i as u32);
                max_raw.push(r);
            }
        }
        let mut next_leq = vec![len as u32; len];
        let mut stack: Vec<u32> = Vec::new();
        for i in (0..len).rev() {
            while let Some(&top) = stack.last() {
                if raw[top as usize] > raw[i] {
                    stack.pop();
                } else {
                    break;
                }
            }
            if let Some(&top) = stack.last() {
                next_leq[i] = top;
            }
            stack.push(i as u32);
        }
        let has_defects = etraj.bits[1..].iter().any(|&b| b == 0);
        let (next_zero, visits) = if has_defects {
            let mut nz_arr = vec![len as u32; len];
            let mut nz = len as u32;
            for i in (0..len).rev() {
                if i > 0 && etraj.bits[i] == 0 {
                    nz = i as u32;
                }
                nz_arr[i] = nz;
            }
            (Some(nz_arr), Some(VisitIndex::build(&etraj.positions, cfg.d)))
        } else {
            (None, None)
        };
        WalkAnalysis { raw, max_times, max_raw, next_leq, next_zero, visits }
    }

    /// First index whose level exceeds `threshold`.
    pub(crate) fn first_above(&self, threshold: f64) -> Option<usize> {
        let idx = self.max_raw.partition_point(|&m| (m as f64) <= threshold);
        if idx < self.max_raw.len() {
            Some(self.max_times[idx] as usize)
        } else {
            None
        }
    }

    /// Earliest ORI event after `t` for an origin vicinity around `origin`:
    /// a defect step leaving the closed L1 ball of radius 1.
    pub(crate) fn ori_after(
        &self,
        cfg: &EnvConfig,
        origin: &Point,
        t: usize,
        len: usize,
    ) -> Option<usize> {
        let (Some(next_zero), Some(visits)) = (&self.next_zero, &self.visits) else {
            return None;
        };
        let mut best: Option<u32> = None;
        let mut consider = |p: Point| {
            if let Some(n) = visits.first_defect_departure(&p, cfg.d, t as u32, next_zero, len) {
                best = Some(best.map_or(n, |b| b.min(n)));
            }
        };
        consider(*origin);
        for dir in 0..2 * cfg.d {
            if let Ok(p) = origin.step(dir % cfg.d, dir < cfg.d) {
                consider(p);
            }
        }
        best.map(|b| b as usize)
    }
}

/// Minimum level gain between consecutive regeneration points, in raw
/// (integer dot) units: `2 / sqrt(d)` in level units.
fn min_gap_raw(cfg: &EnvConfig) -> i64 {
    let gap = 2.0 / (cfg.d as f64).sqrt() * cfg.ell.norm();
    (gap - 1e-9).ceil() as i64
}

/// Extracts regeneration records from an enhanced trajectory.
///
/// Candidates are strict running maxima of the level at K-open points,
/// greedily thinned so successive candidates gain at least `2/sqrt(d)` in
/// level. A candidate is confirmed when no `D` event occurs before the walk
/// gains `confirm_distance` in level (checked within `horizon` steps);
/// candidates still pending when the data runs out are emitted with
/// `censored = true`.
pub fn extract_regenerations(
    etraj: &EnhancedTrajectory,
    cfg: &EnvConfig,
    confirm_distance: f64,
    horizon: usize,
) -> Result<Vec<RegenerationRecord>, RegenError> {
    let analysis = WalkAnalysis::build(cfg, etraj);
    let records = extract_with_analysis(etraj, cfg, &analysis, confirm_distance, horizon)?;
    if !records.iter().any(|r| !r.censored) {
        return Err(RegenError::NoRegenerationFound);
    }
    Ok(records)
}

pub(crate) fn extract_with_analysis(
    etraj: &EnhancedTrajectory,
    cfg: &EnvConfig,
    analysis: &WalkAnalysis,
    confirm_distance: f64,
    horizon: usize,
) -> Result<Vec<RegenerationRecord>, RegenError> {
    let len = etraj.positions.len();
    let gap = min_gap_raw(cfg);
    let confirm_raw = confirm_distance * cfg.ell.norm();
    let mut out: Vec<RegenerationRecord> = Vec::new();
    let mut run_max = analysis.raw[0];
    let mut last_candidate_raw: Option<i64> = None;
    for t in 1..len {
        let r = analysis.raw[t];
        if r <= run_max {
            continue;
        }
        run_max = r;
        if let Some(prev) = last_candidate_raw {
            if r - prev < gap {
                continue;
            }
        }
        if !is_k_open(cfg, &etraj.positions[t]) {
            continue;
        }
        last_candidate_raw = Some(r);
        // BACK: next index at or below this level.
        let back = analysis.next_leq[t] as usize;
        // ORI: first defect step leaving the vicinity of the candidate.
        let ori = analysis.ori_after(cfg, &etraj.positions[t], t, len).unwrap_or(len);
        let event = back.min(ori);
        // Confirmation: first index whose level exceeds raw[t] + confirm.
        let confirm_at = analysis.first_above(r as f64 + confirm_raw).unwrap_or(len);
        let window_end = len.min(t.saturating_add(horizon).saturating_add(1));
        if event < confirm_at && event < window_end {
            continue; // candidate failed
        }
        let censored = confirm_at >= window_end;
        out.push(RegenerationRecord {
            k: 0,
            tau: t,
            point: etraj.positions[t],
            chi: 0,
            censored,
        });
    }
    // Box radii over the blocks, plus the consistency guards.
    let mut prev_tau = 0usize;
    let mut prev_raw: Option<i64> = None;
    for (i, rec) in out.iter_mut().enumerate() {
        rec.k = i + 1;
        rec.chi = regeneration_box(&etraj.positions, prev_tau, rec.tau, cfg)?;
        let r = cfg.ell.raw_level(&rec.point);
        if let Some(p) = prev_raw {
            if r - p < gap {
                return Err(RegenError::Inconsistent(format!(
                    "regeneration points at raw levels {p} and {r} violate the 2/sqrt(d) gap"
                )));
            }
        }
        if rec.tau <= prev_tau && i > 0 {
            return Err(RegenError::Inconsistent("regeneration times not increasing".into()));
        }
        prev_tau = rec.tau;
        prev_raw = Some(r);
    }
    Ok(out)
}

/// Projection extremes over a trajectory window: direction 0 is the drift
/// direction, the rest are the orthonormal complement vectors.
#[derive(Debug, Clone, Copy)]
struct Window {
    min: [f64; crate::env::MAX_DIM],
    max: [f64; crate::env::MAX_DIM],
}

impl Window {
    fn empty() -> Window {
        Window { min: [f64::INFINITY; crate::env::MAX_DIM], max: [f64::NEG_INFINITY; crate::env::MAX_DIM] }
    }

    #[inline]
    fn absorb_point(&mut self, dots: &[f64]) {
        for (i, &v) in dots.iter().enumerate() {
            if v < self.min[i] {
                self.min[i] = v;
            }
            if v > self.max[i] {
                self.max[i] = v;
            }
        }
    }

    fn merge(&mut self, other: &Window) {
        for i in 0..crate::env::MAX_DIM {
            self.min[i] = self.min[i].min(other.min[i]);
            self.max[i] = self.max[i].max(other.max[i]);
        }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    tau: usize,
    point: Point,
    raw: i64,
    /// Projection extremes over `[previous candidate tau, tau]`; failed
    /// candidates fold their window into their successor, so at
    /// confirmation this covers the whole block since the previous record.
    window: Window,
}

#[inline]
fn projections(cfg: &EnvConfig, p: &Point, out: &mut [f64; crate::env::MAX_DIM]) {
    let mut disp = [0f64; crate::env::MAX_DIM];
    for i in 0..cfg.d {
        disp[i] = p.coord(i) as f64;
    }
    out[0] = cfg.ell.dot_unit(&disp[..cfg.d]);
    for (j, f) in cfg.ell.orth_basis().iter().enumerate() {
        out[j + 1] = (0..cfg.d).map(|i| disp[i] * f[i]).sum();
    }
}

/// Box radius of a block from its projection window and the projections of
/// the block's starting point.
fn box_radius_from_window(cfg: &EnvConfig, window: &Window, start_dots: &[f64]) -> u32 {
    let along = (window.max[0] - start_dots[0]).max(start_dots[0] - window.min[0]).max(0.0);
    let mut orth: f64 = 0.0;
    for j in 1..cfg.d {
        orth = orth
            .max(window.max[j] - start_dots[j])
            .max(start_dots[j] - window.min[j]);
    }
    let mut m = (along - 1e-9).ceil().max(1.0) as u32;
    while ((m as f64).powf(cfg.alpha)) < orth - 1e-9 {
        m += 1;
    }
    m
}

/// Streaming regeneration detector over a live enhanced walk.
///
/// Needs no stored trajectory: candidates sit in a deque ordered by level,
/// backtracking kills a suffix, confirmation pops a prefix. Only valid in
/// `Capped` clamp mode, where the defect channel carries no mass and the
/// failure event reduces to backtracking; it then emits exactly the records
/// of `extract_regenerations` on the same stream.
pub struct RegenSession<'a> {
    cfg: &'a EnvConfig,
    stepper: EnhancedStepper<'a>,
    sampler: crate::env::FieldSampler,
    run_max: i64,
    last_candidate_raw: Option<i64>,
    gap: i64,
    confirm_raw: f64,
    open_window: Window,
    active: std::collections::VecDeque<Candidate>,
    records: Vec<RegenerationRecord>,
    confirmed: usize,
    prev_record_dots: [f64; crate::env::MAX_DIM],
    start: Point,
}

impl<'a> RegenSession<'a> {
    pub fn new(
        cfg: &'a EnvConfig,
        x0: Point,
        stream: Stream,
        confirm_distance: f64,
    ) -> Result<Self, RegenError> {
        if cfg.clamp != ClampMode::Capped {
            return Err(RegenError::Inconsistent(
                "streaming regeneration sessions require the capped clamp mode".into(),
            ));
        }
        let stepper = EnhancedStepper::new(cfg, x0, stream)?;
        let mut open_window = Window::empty();
        let mut dots = [0f64; crate::env::MAX_DIM];
        projections(cfg, &x0, &mut dots);
        open_window.absorb_point(&dots[..cfg.d]);
        Ok(RegenSession {
            cfg,
            stepper,
            sampler: crate::env::FieldSampler::new(cfg),
            run_max: cfg.ell.raw_level(&x0),
            last_candidate_raw: None,
            gap: min_gap_raw(cfg),
            confirm_raw: confirm_distance * cfg.ell.norm(),
            open_window,
            active: std::collections::VecDeque::new(),
            records: Vec::new(),
            confirmed: 0,
            prev_record_dots: dots,
            start: x0,
        })
    }

    pub fn start_point(&self) -> Point {
        self.start
    }

    pub fn confirmed(&self) -> usize {
        self.confirmed
    }

    pub fn steps_taken(&self) -> u64 {
        self.stepper.steps_taken()
    }

    fn advance_one(&mut self) -> Result<(), RegenError> {
        let (p, _bit) = self.stepper.step()?;
        let t = self.stepper.steps_taken() as usize;
        let r = self.cfg.ell.raw_level(&p);
        let mut dots = [0f64; crate::env::MAX_DIM];
        projections(self.cfg, &p, &mut dots);
        self.open_window.absorb_point(&dots[..self.cfg.d]);
        // BACK kills every pending candidate at or above this level; dead
        // windows fold into the open window so the block chain stays intact.
        while let Some(last) = self.active.back() {
            if last.raw >= r {
                let dead = self.active.pop_back().unwrap();
                self.open_window.merge(&dead.window);
            } else {
                break;
            }
        }
        // Confirmation pops candidates whose level lies a full confirmation
        // distance below the current one.
        while let Some(front) = self.active.front() {
            if (r as f64) > front.raw as f64 + self.confirm_raw {
                let c = self.active.pop_front().unwrap();
                self.emit(c, false);
            } else {
                break;
            }
        }
        // New candidate at a strict running maximum.
        if r > self.run_max {
            self.run_max = r;
            let spaced = self.last_candidate_raw.map_or(true, |prev| r - prev >= self.gap);
            if spaced && self.sampler.k_open(&p, self.cfg.k) {
                self.last_candidate_raw = Some(r);
                let mut window = Window::empty();
                std::mem::swap(&mut window, &mut self.open_window);
                self.open_window.absorb_point(&dots[..self.cfg.d]);
                self.active.push_back(Candidate { tau: t, point: p, raw: r, window });
            }
        }
        Ok(())
    }

    fn emit(&mut self, mut c: Candidate, censored: bool) {
        // block window includes both endpoints
        let mut dots = [0f64; crate::env::MAX_DIM];
        projections(self.cfg, &c.point, &mut dots);
        c.window.absorb_point(&dots[..self.cfg.d]);
        let chi = box_radius_from_window(self.cfg, &c.window, &self.prev_record_dots[..self.cfg.d]);
        self.records.push(RegenerationRecord {
            k: self.records.len() + 1,
            tau: c.tau,
            point: c.point,
            chi,
            censored,
        });
        if !censored {
            self.confirmed += 1;
        }
        self.prev_record_dots = dots;
    }

    /// Runs until `target` confirmed records or `max_steps`; pending
    /// candidates are flushed as censored records.
    pub fn run(
        mut self,
        target: usize,
        max_steps: usize,
    ) -> Result<(Vec<RegenerationRecord>, u64), RegenError> {
        while self.confirmed < target && (self.stepper.steps_taken() as usize) < max_steps {
            self.advance_one()?;
        }
        let steps = self.stepper.steps_taken();
        let pending: Vec<Candidate> = self.active.drain(..).collect();
        for c in pending {
            self.emit(c, true);
        }
        if self.confirmed == 0 {
            return Err(RegenError::NoRegenerationFound);
        }
        Ok((self.records, steps))
    }
}

/// Smallest integer `m >= 1` such that every displacement
/// `X_i - X_from, i in [from, to]` lies in the tilted box `B(m, m^alpha)`.
pub fn regeneration_box(
    positions: &[Point],
    from: usize,
    to: usize,
    cfg: &EnvConfig,
) -> Result<u32, RegenError> {
    if from > to || to >= positions.len() {
        return Err(RegenError::Inconsistent(format!(
            "invalid block [{from}, {to}] for trajectory of length {}",
            positions.len()
        )));
    }
    let base = positions[from];
    let mut along_max = 0.0f64;
    let mut orth_max = 0.0f64;
    let orth = cfg.ell.orth_basis();
    for p in &positions[from..=to] {
        let mut disp = [0f64; crate::env::MAX_DIM];
        for i in 0..cfg.d {
            disp[i] = (p.coord(i) - base.coord(i)) as f64;
        }
        along_max = along_max.max(cfg.ell.dot_unit(&disp[..cfg.d]).abs());
        for f in orth {
            let o: f64 = (0..cfg.d).map(|i| disp[i] * f[i]).sum();
            orth_max = orth_max.max(o.abs());
        }
    }
    let mut m = (along_max - 1e-9).ceil().max(1.0) as u32;
    while ((m as f64).powf(cfg.alpha)) < orth_max - 1e-9 {
        m += 1;
    }
    Ok(m)
}

/// Rescaled regeneration-subsequence processes on the grid `t_j = j / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSample {
    pub t_grid: Vec<f64>,
    /// `Y_n(t) = X_{tau_{floor(tn)}} / n`, one d-vector per grid point.
    pub y: Vec<Vec<f64>>,
    /// `Z_n(t) = (X_{tau_{floor(tn)}} - v_hat n t) / sqrt(n)`.
    pub z: Vec<Vec<f64>>,
    /// `S_n(t) = tau_{floor(tn)} / Inv(n)`.
    pub s: Vec<f64>,
    pub n: usize,
    pub v_hat: Vec<f64>,
}

/// Drift estimate: mean displacement between consecutive confirmed
/// regeneration points, skipping the first block.
pub fn estimate_drift(records: &[RegenerationRecord], d: usize) -> Result<Vec<f64>, RegenError> {
    let confirmed: Vec<&RegenerationRecord> = records.iter().filter(|r| !r.censored).collect();
    if confirmed.len() < 2 {
        return Err(RegenError::InsufficientRecords { need: 2, have: confirmed.len() });
    }
    let mut v = vec![0.0; d];
    let m = confirmed.len() - 1;
    for w in confirmed.windows(2) {
        for i in 0..d {
            v[i] += (w[1].point.coord(i) - w[0].point.coord(i)) as f64;
        }
    }
    for x in v.iter_mut() {
        *x /= m as f64;
    }
    Ok(v)
}

/// Builds `(Y_n, Z_n, S_n)` from confirmed records on the grid
/// `t_j = j / n, j = 0 .. floor(T n)`; index 0 uses the walk's start.
pub fn build_processes(
    records: &[RegenerationRecord],
    start: Point,
    cfg: &EnvConfig,
    n: usize,
    t_max: f64,
    v_hat: Option<Vec<f64>>,
) -> Result<ProcessSample, RegenError> {
    let confirmed: Vec<&RegenerationRecord> = records.iter().filter(|r| !r.censored).collect();
    let j_max = (t_max * n as f64 + 1e-9).floor() as usize;
    if confirmed.len() < j_max {
        return Err(RegenError::InsufficientRecords { need: j_max, have: confirmed.len() });
    }
    let v_hat = match v_hat {
        Some(v) => v,
        None => estimate_drift(records, cfg.d)?,
    };
    let inv_n = inv_scale(n as f64, cfg.gamma)?;
    let sqrt_n = (n as f64).sqrt();
    let mut sample = ProcessSample {
        t_grid: Vec::with_capacity(j_max + 1),
        y: Vec::with_capacity(j_max + 1),
        z: Vec::with_capacity(j_max + 1),
        s: Vec::with_capacity(j_max + 1),
        n,
        v_hat: v_hat.clone(),
    };
    for j in 0..=j_max {
        let t = j as f64 / n as f64;
        let (tau, point) = if j == 0 {
            (0usize, start)
        } else {
            let r = confirmed[j - 1];
            (r.tau, r.point)
        };
        let mut yv = vec![0.0; cfg.d];
        let mut zv = vec![0.0; cfg.d];
        for i in 0..cfg.d {
            let x = point.coord(i) as f64;
            yv[i] = x / n as f64;
            zv[i] = (x - v_hat[i] * n as f64 * t) / sqrt_n;
        }
        sample.t_grid.push(t);
        sample.y.push(yv);
        sample.z.push(zv);
        sample.s.push(tau as f64 / inv_n);
    }
    Ok(sample)
}

/// Shifted process `W*(t) = W(t + 1/n) - W(1/n)`, grid-aligned.
pub fn shift_process(w: &ProcessSample, n: usize) -> Result<ProcessSample, RegenError> {
    if w.n != n {
        return Err(RegenError::Inconsistent(format!(
            "shift scale {n} does not match sample scale {}",
            w.n
        )));
    }
    if w.t_grid.len() < 2 {
        return Err(RegenError::GridTooShort);
    }
    let m = w.t_grid.len() - 1;
    let mut out = ProcessSample {
        t_grid: Vec::with_capacity(m),
        y: Vec::with_capacity(m),
        z: Vec::with_capacity(m),
        s: Vec::with_capacity(m),
        n,
        v_hat: w.v_hat.clone(),
    };
    for j in 0..m {
        out.t_grid.push(j as f64 / n as f64);
        out.y.push(w.y[j + 1].iter().zip(&w.y[1]).map(|(a, b)| a - b).collect());
        out.z.push(w.z[j + 1].iter().zip(&w.z[1]).map(|(a, b)| a - b).collect());
        out.s.push(w.s[j + 1] - w.s[1]);
    }
    Ok(out)
}
