//! Quenched random walk dynamics: transition law, stepping, trajectory
//! recording, hitting and exit times, and tilted-box geometry.

use crate::env::{
    canonical_edge, incident_base, EnvConfig, EnvError, Point, COORD_LIMIT, MAX_DIM,
};
use crate::env::{mix64, unit_from_hash};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Counter-based randomness stream keyed by `(master seed, stream id)`.
///
/// Every uniform is a pure function of `(stream, step, slot)`, so replicas
/// never share state, replay is bit-exact under any scheduling, and a plain
/// walk and an enhanced walk driven by the same stream take identical
/// positions (the position always consumes slot 0 of its step).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stream {
    pub master: u64,
    pub id: u64,
}

const STREAM_DOMAIN: u64 = 0xD1B5_4A32_D192_ED03;

impl Stream {
    pub fn new(master: u64, id: u64) -> Stream {
        Stream { master, id }
    }

    #[inline]
    pub fn uniform(&self, step: u64, slot: u32) -> f64 {
        let mut h = mix64(self.master ^ STREAM_DOMAIN);
        h = mix64(h ^ self.id);
        h = mix64(h ^ step);
        h = mix64(h ^ slot as u64);
        unit_from_hash(h)
    }
}

/// One recorded walk path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: Point,
    pub positions: Vec<Point>,
    pub rng_stream_id: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Directionally tilted box `B_center(L, L')`: membership means
/// `|(x - center) . ell_unit| <= L` and `|(x - center) . f_j| <= L'` for the
/// orthonormal complement vectors f_2 .. f_d.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedBox {
    pub center: Point,
    pub l: f64,
    pub lp: f64,
}

impl TiltedBox {
    pub fn contains(&self, cfg: &EnvConfig, x: &Point) -> bool {
        let mut disp = [0f64; MAX_DIM];
        for i in 0..cfg.d {
            disp[i] = (x.coord(i) - self.center.coord(i)) as f64;
        }
        let along = cfg.ell.dot_unit(&disp[..cfg.d]);
        if along.abs() > self.l + 1e-12 {
            return false;
        }
        for f in cfg.ell.orth_basis() {
            let o: f64 = (0..cfg.d).map(|i| disp[i] * f[i]).sum();
            if o.abs() > self.lp + 1e-12 {
                return false;
            }
        }
        true
    }
}

/// Weights of the 2d neighbour moves from `x`, with the common factor
/// `exp(2 x . ell)` cancelled: `w_j = c_*([x, y_j]) * exp((y_j - x) . ell)`.
///
/// Working with relative weights keeps the kernel finite arbitrarily far in
/// the drift direction, where `exp((x + y) . ell)` itself overflows.
#[derive(Debug, Clone)]
pub struct LocalKernel {
    pub neighbors: Vec<Point>,
    /// Base conductances of the incident edges, same order as `neighbors`.
    pub base: Vec<f64>,
    /// Relative biased weights.
    pub weights: Vec<f64>,
    pub total: f64,
}

/// Direction factors `exp((y - x) . ell)` for the 2d canonical moves.
pub fn direction_factors(cfg: &EnvConfig) -> Vec<f64> {
    let bias = cfg.bias();
    let mut f = Vec::with_capacity(2 * cfg.d);
    for dir in 0..2 * cfg.d {
        let axis = dir % cfg.d;
        let sign = if dir < cfg.d { 1.0 } else { -1.0 };
        f.push((sign * bias[axis]).exp());
    }
    f
}

pub fn local_kernel(cfg: &EnvConfig, x: &Point) -> Result<LocalKernel, WalkError> {
    let dir_f = direction_factors(cfg);
    local_kernel_with(cfg, x, &dir_f)
}

pub(crate) fn local_kernel_with(
    cfg: &EnvConfig,
    x: &Point,
    dir_f: &[f64],
) -> Result<LocalKernel, WalkError> {
    let base = incident_base(cfg, x)?;
    let mut neighbors = Vec::with_capacity(2 * cfg.d);
    let mut weights = Vec::with_capacity(2 * cfg.d);
    let mut total = 0.0;
    for dir in 0..2 * cfg.d {
        let axis = dir % cfg.d;
        let y = x.step(axis, dir < cfg.d)?;
        let w = base[dir] * dir_f[dir];
        neighbors.push(y);
        weights.push(w);
        total += w;
    }
    Ok(LocalKernel { neighbors, base, weights, total })
}

/// Quenched transition distribution at `x`: neighbour `y` gets mass
/// `c([x, y]) / sum_w c([x, w])`. Entries are strictly positive and sum to 1.
pub fn transition_distribution(
    cfg: &EnvConfig,
    x: &Point,
) -> Result<Vec<(Point, f64)>, WalkError> {
    let k = local_kernel(cfg, x)?;
    Ok(k.neighbors
        .iter()
        .zip(k.weights.iter())
        .map(|(&y, &w)| (y, w / k.total))
        .collect())
}

/// Stationary measure `pi(x) = sum_{w ~ x} c([x, w])` (unnormalized, raw
/// biased conductances). Overflows for points far along the drift; intended
/// for moderate coordinates.
pub fn stationary_weight(cfg: &EnvConfig, x: &Point) -> Result<f64, WalkError> {
    let mut s = 0.0;
    for dir in 0..2 * cfg.d {
        let axis = dir % cfg.d;
        let y = x.step(axis, dir < cfg.d)?;
        let e = canonical_edge(*x, y)?;
        s += crate::env::biased_conductance(cfg, &e);
    }
    Ok(s)
}

#[inline]
pub(crate) fn guard_window(p: &Point, d: usize) -> Result<(), EnvError> {
    for i in 0..d {
        let c = p.coord(i);
        if c <= i16::MIN + 2 || c >= COORD_LIMIT - 2 {
            return Err(EnvError::RangeExceeded);
        }
    }
    Ok(())
}

/// Samples `steps` transitions starting from `x0`. Identical
/// `(cfg, x0, stream)` always produce identical trajectories.
pub fn simulate_path(
    cfg: &EnvConfig,
    x0: Point,
    stream: Stream,
    steps: usize,
) -> Result<Trajectory, WalkError> {
    let dir_f = direction_factors(cfg);
    let mut positions = Vec::with_capacity(steps + 1);
    positions.push(x0);
    let mut x = x0;
    for step in 0..steps {
        guard_window(&x, cfg.d)?;
        let k = local_kernel_with(cfg, &x, &dir_f)?;
        let u = stream.uniform(step as u64, 0) * k.total;
        let mut acc = 0.0;
        let mut chosen = k.neighbors[2 * cfg.d - 1];
        for (j, &w) in k.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                chosen = k.neighbors[j];
                break;
            }
        }
        positions.push(chosen);
        x = chosen;
    }
    Ok(Trajectory { start: x0, positions, rng_stream_id: stream.id })
}

/// First index `n >= 0` with `pred(positions[n])`, within the recorded
/// horizon.
pub fn hitting_time<F: Fn(&Point) -> bool>(traj: &Trajectory, pred: F) -> Option<usize> {
    traj.positions.iter().position(|p| pred(p))
}

/// Strict variant: first index `n >= 1` with `pred(positions[n])`.
pub fn hitting_time_strict<F: Fn(&Point) -> bool>(traj: &Trajectory, pred: F) -> Option<usize> {
    traj.positions[1..].iter().position(|p| pred(p)).map(|i| i + 1)
}

/// Exit time of a set: first index with the predicate false.
pub fn exit_time<F: Fn(&Point) -> bool>(traj: &Trajectory, inside: F) -> Option<usize> {
    traj.positions.iter().position(|p| !inside(p))
}

/// Level hitting time `T_R`: first entry into the open half-space
/// `{z : z . ell_unit > R}`.
pub fn level_hitting_time(cfg: &EnvConfig, traj: &Trajectory, r: f64) -> Option<usize> {
    let threshold = r * cfg.ell.norm();
    traj.positions
        .iter()
        .position(|p| (cfg.ell.raw_level(p) as f64) > threshold)
}
