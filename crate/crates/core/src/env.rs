//! Random conductance environment on the edges of Z^d.
//!
//! The field is purely procedural: every edge conductance is a deterministic
//! function of `(seed, edge)` through an avalanche-quality integer mixer, so
//! arbitrarily large regions are addressable without storing anything. The
//! marginal law of a base conductance is Pareto with tail exponent `gamma`:
//! `P(c_* >= u) = u^{-gamma}` for `u >= 1`. The directional bias multiplies
//! each edge `[x, y]` by `exp((x + y) . ell)` with `ell = lambda * ell_unit`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard upper bound on the lattice dimension supported by the packed
/// point representation.
pub const MAX_DIM: usize = 8;

/// Coordinates are confined to `|c| < COORD_LIMIT` so that each axis packs
/// into 16 bits of the edge encoding; simulations guard this window.
pub const COORD_LIMIT: i16 = i16::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("endpoints are not nearest neighbours (L1 distance != 1)")]
    NonAdjacent,
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("coordinate left the encodable window |c| < {COORD_LIMIT}")]
    RangeExceeded,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// A lattice point of Z^d, padded with zeroes beyond dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    c: [i16; MAX_DIM],
}

impl Point {
    pub fn origin() -> Self {
        Point { c: [0; MAX_DIM] }
    }

    pub fn new(coords: &[i16]) -> Self {
        assert!(coords.len() <= MAX_DIM, "dimension above MAX_DIM");
        let mut c = [0i16; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point { c }
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i16 {
        self.c[axis]
    }

    #[inline]
    pub fn coords(&self, d: usize) -> &[i16] {
        &self.c[..d]
    }

    /// Nearest neighbour obtained by one unit step along `axis`.
    #[inline]
    pub fn step(&self, axis: usize, forward: bool) -> Result<Point, EnvError> {
        let mut p = *self;
        let delta = if forward { 1 } else { -1 };
        let next = p.c[axis].checked_add(delta).ok_or(EnvError::RangeExceeded)?;
        if next == i16::MIN || next == i16::MAX {
            return Err(EnvError::RangeExceeded);
        }
        p.c[axis] = next;
        Ok(p)
    }

    #[inline]
    pub fn l1_distance(&self, other: &Point) -> u32 {
        let mut s = 0u32;
        for i in 0..MAX_DIM {
            s += (self.c[i] as i32 - other.c[i] as i32).unsigned_abs();
        }
        s
    }

    /// Packs the first four coordinates into one 64-bit word (16 bits each,
    /// two's complement); higher dimensions use a second word.
    #[inline]
    fn packed_words(&self, d: usize) -> ([u64; 2], usize) {
        let mut words = [0u64; 2];
        for (i, &v) in self.c[..d].iter().enumerate() {
            words[i / 4] |= (v as u16 as u64) << (16 * (i % 4));
        }
        (words, d.div_ceil(4))
    }
}

/// Shorthand constructor used pervasively in tests.
pub fn pt(coords: &[i16]) -> Point {
    Point::new(coords)
}

/// Canonical (order-independent) key of a nearest-neighbour edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeKey {
    first: Point,
    second: Point,
}

impl EdgeKey {
    #[inline]
    pub fn endpoints(&self) -> (Point, Point) {
        (self.first, self.second)
    }
}

/// Normal form of the edge `[x, y]`: the lexicographically smaller endpoint
/// first, so `canonical_edge(x, y) == canonical_edge(y, x)`.
pub fn canonical_edge(x: Point, y: Point) -> Result<EdgeKey, EnvError> {
    if x.l1_distance(&y) != 1 {
        return Err(EnvError::NonAdjacent);
    }
    if x.c <= y.c {
        Ok(EdgeKey { first: x, second: y })
    } else {
        Ok(EdgeKey { first: y, second: x })
    }
}

/// Direction of the bias: an integer vector plus its normalization, the unit
/// vector `ell_unit`, and an orthonormal basis of the complement. Integer
/// levels `x . ints` make half-space comparisons exact (no float ties) when
/// comparing two lattice points.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    d: usize,
    ints: [i64; MAX_DIM],
    unit: [f64; MAX_DIM],
    norm: f64,
    orth: Vec<[f64; MAX_DIM]>,
}

impl Direction {
    /// Builds the direction from an integer vector (not necessarily unit).
    pub fn from_ints(ints: &[i64]) -> Result<Direction, EnvError> {
        let d = ints.len();
        if !(2..=MAX_DIM).contains(&d) {
            return Err(EnvError::InvalidConfig(format!(
                "direction dimension {d} outside [2, {MAX_DIM}]"
            )));
        }
        let norm2: i64 = ints.iter().map(|&v| v * v).sum();
        if norm2 == 0 {
            return Err(EnvError::InvalidConfig("direction vector is zero".into()));
        }
        let norm = (norm2 as f64).sqrt();
        let mut ai = [0i64; MAX_DIM];
        ai[..d].copy_from_slice(ints);
        let mut unit = [0f64; MAX_DIM];
        for i in 0..d {
            unit[i] = ints[i] as f64 / norm;
        }
        let orth = orthonormal_complement(&unit, d);
        Ok(Direction { d, ints: ai, unit, norm, orth })
    }

    pub fn e1(d: usize) -> Direction {
        let mut ints = vec![0i64; d];
        ints[0] = 1;
        Direction::from_ints(&ints).expect("e1 is always valid")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm
    }

    #[inline]
    pub fn unit(&self) -> &[f64] {
        &self.unit[..self.d]
    }

    pub fn ints(&self) -> &[i64] {
        &self.ints[..self.d]
    }

    /// Orthonormal complement vectors f_2, ..., f_d.
    pub fn orth_basis(&self) -> &[[f64; MAX_DIM]] {
        &self.orth
    }

    /// Integer-scaled level `x . ints`; equals `(x . ell_unit) * norm`.
    #[inline]
    pub fn raw_level(&self, p: &Point) -> i64 {
        let mut s = 0i64;
        for i in 0..self.d {
            s += self.ints[i] * p.c[i] as i64;
        }
        s
    }

    /// Level of a point along the unit direction.
    #[inline]
    pub fn level(&self, p: &Point) -> f64 {
        self.raw_level(p) as f64 / self.norm
    }

    /// Projection of an arbitrary displacement onto the unit direction.
    #[inline]
    pub fn dot_unit(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d.min(v.len()) {
            s += self.unit[i] * v[i];
        }
        s
    }
}

fn orthonormal_complement(unit: &[f64; MAX_DIM], d: usize) -> Vec<[f64; MAX_DIM]> {
    // Gram-Schmidt of the canonical basis against ell_unit, keeping the
    // d - 1 independent directions in canonical order.
    let mut basis: Vec<[f64; MAX_DIM]> = Vec::with_capacity(d - 1);
    for axis in 0..d {
        let mut v = [0f64; MAX_DIM];
        v[axis] = 1.0;
        let mut proj = unit[axis];
        for i in 0..d {
            v[i] -= proj * unit[i];
        }
        for b in &basis {
            proj = (0..d).map(|i| v[i] * b[i]).sum();
            for i in 0..d {
                v[i] -= proj * b[i];
            }
        }
        let n: f64 = (0..d).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
        if n > 1e-9 {
            for x in v.iter_mut() {
                *x /= n;
            }
            basis.push(v);
            if basis.len() == d - 1 {
                break;
            }
        }
    }
    basis
}

/// How the sub-kernel clamps of the enhanced walk are read; see
/// `regen::enhanced_kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClampMode {
    /// Numerator clamped down to `K^{-1}`, denominator clamped up to `K`
    /// (the formula as printed).
    Printed,
    /// Numerator floored at `K^{-1}`, denominator capped at `K`, with the
    /// result capped at the full kernel so the defect mass stays
    /// non-negative.
    Capped,
}

/// Source of the base conductances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FieldKind {
    /// Hashed Pareto field derived from the seed.
    HashedPareto,
    /// Constant field, mainly for closed-form checks.
    Constant(f64),
}

/// Immutable model parameters; fully determines the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub d: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub ell: Direction,
    pub k: f64,
    pub alpha: f64,
    pub seed: u64,
    pub clamp: ClampMode,
    pub field: FieldKind,
}

impl EnvConfig {
    pub fn new(
        d: usize,
        gamma: f64,
        lambda: f64,
        ell_ints: &[i64],
        k: f64,
        alpha: f64,
        seed: u64,
    ) -> Result<EnvConfig, EnvError> {
        if !(2..=MAX_DIM).contains(&d) {
            return Err(EnvError::InvalidConfig(format!("d = {d} outside [2, {MAX_DIM}]")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(EnvError::InvalidConfig(format!("gamma = {gamma} outside (0, 1)")));
        }
        if !(lambda > 0.0) {
            return Err(EnvError::InvalidConfig(format!("lambda = {lambda} must be > 0")));
        }
        if !(k > 1.0) {
            return Err(EnvError::InvalidConfig(format!("K = {k} must be > 1")));
        }
        if !(alpha > (d + 3) as f64) {
            return Err(EnvError::InvalidConfig(format!(
                "alpha = {alpha} must exceed d + 3 = {}",
                d + 3
            )));
        }
        let ell = Direction::from_ints(ell_ints)?;
        if ell.dim() != d {
            return Err(EnvError::InvalidConfig(format!(
                "direction has dimension {}, expected {d}",
                ell.dim()
            )));
        }
        Ok(EnvConfig {
            d,
            gamma,
            lambda,
            ell,
            k,
            alpha,
            seed,
            clamp: ClampMode::Printed,
            field: FieldKind::HashedPareto,
        })
    }

    /// Default desk-scale configuration: d = 2, ell = e1, alpha = 8.
    pub fn desk(gamma: f64, lambda: f64, k: f64, seed: u64) -> EnvConfig {
        EnvConfig::new(2, gamma, lambda, &[1, 0], k, 8.0, seed).expect("valid desk config")
    }

    pub fn with_clamp(mut self, clamp: ClampMode) -> EnvConfig {
        self.clamp = clamp;
        self
    }

    pub fn with_field(mut self, field: FieldKind) -> EnvConfig {
        self.field = field;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> EnvConfig {
        self.seed = seed;
        self
    }

    /// Bias vector `ell = lambda * ell_unit`, restricted to d coordinates.
    pub fn bias(&self) -> Vec<f64> {
        self.ell.unit().iter().map(|u| u * self.lambda).collect()
    }
}

// splitmix64 finalizer; full avalanche on 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EDGE_DOMAIN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Uniform in the open interval (0, 1) from 53 high bits of the hash.
#[inline]
pub fn unit_from_hash(h: u64) -> f64 {
    ((h >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Pareto(gamma) value on support [1, inf) from a uniform in (0, 1].
/// The workhorse tail index 1/2 avoids `powf` so hot loops and scalar
/// call sites produce bit-identical values.
#[inline]
pub fn pareto_from_unit(u: f64, gamma: f64) -> f64 {
    if gamma == 0.5 {
        let r = 1.0 / u;
        r * r
    } else {
        u.powf(-1.0 / gamma)
    }
}

#[inline]
fn edge_uniform(cfg: &EnvConfig, e: &EdgeKey) -> f64 {
    let (xw, n) = e.first.packed_words(cfg.d);
    let (yw, _) = e.second.packed_words(cfg.d);
    let mut h = mix64(cfg.seed ^ EDGE_DOMAIN);
    for i in 0..n {
        h = mix64(h ^ xw[i]);
        h = mix64(h ^ yw[i]);
    }
    unit_from_hash(h)
}

/// Allocation-free conductance sampler for hot loops; produces bit-identical
/// values to `base_conductance`.
#[derive(Debug, Clone)]
pub(crate) struct FieldSampler {
    seed_h: u64,
    d: usize,
    nwords: usize,
    inv_gamma: f64,
    /// 1/gamma == 2 fast path (gamma = 1/2 is the workhorse tail index).
    square: bool,
    constant: Option<f64>,
}

impl FieldSampler {
    pub(crate) fn new(cfg: &EnvConfig) -> FieldSampler {
        let inv_gamma = 1.0 / cfg.gamma;
        FieldSampler {
            seed_h: mix64(cfg.seed ^ EDGE_DOMAIN),
            d: cfg.d,
            nwords: cfg.d.div_ceil(4),
            inv_gamma,
            square: cfg.gamma == 0.5,
            constant: match cfg.field {
                FieldKind::Constant(c) => Some(c),
                FieldKind::HashedPareto => None,
            },
        }
    }

    // must stay bit-identical to `pareto_from_unit`
    #[inline]
    fn pareto(&self, u: f64) -> f64 {
        if self.square {
            let r = 1.0 / u;
            r * r
        } else {
            u.powf(-self.inv_gamma)
        }
    }

    #[inline]
    fn edge_base(&self, first: &Point, second: &Point) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let (xw, _) = first.packed_words(self.d);
        let (yw, _) = second.packed_words(self.d);
        let mut h = self.seed_h;
        for i in 0..self.nwords {
            h = mix64(h ^ xw[i]);
            h = mix64(h ^ yw[i]);
        }
        self.pareto(unit_from_hash(h))
    }

    /// Base conductances of the 2d incident edges in canonical order;
    /// neighbours are written into `neigh`. Returns an error when a
    /// neighbour leaves the encodable window.
    #[inline]
    pub(crate) fn incident_into(
        &self,
        x: &Point,
        cs: &mut [f64],
        neigh: &mut [Point],
    ) -> Result<(), EnvError> {
        for dir in 0..2 * self.d {
            let axis = dir % self.d;
            let forward = dir < self.d;
            let y = x.step(axis, forward)?;
            // canonical order: the lexicographically smaller endpoint first
            cs[dir] = if forward { self.edge_base(x, &y) } else { self.edge_base(&y, x) };
            neigh[dir] = y;
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn k_open(&self, x: &Point, k: f64) -> bool {
        let mut cs = [0f64; 2 * MAX_DIM];
        let mut neigh = [Point::origin(); 2 * MAX_DIM];
        match self.incident_into(x, &mut cs, &mut neigh) {
            Ok(()) => cs[..2 * self.d].iter().all(|&c| c >= 1.0 / k && c <= k),
            Err(_) => false,
        }
    }
}

/// Base conductance `c_*(e)`: deterministic in `(seed, e)`, marginally
/// Pareto(gamma) on [1, inf).
#[inline]
pub fn base_conductance(cfg: &EnvConfig, e: &EdgeKey) -> f64 {
    match cfg.field {
        FieldKind::HashedPareto => pareto_from_unit(edge_uniform(cfg, e), cfg.gamma),
        FieldKind::Constant(c) => c,
    }
}

/// Biased conductance `c(e) = c_*(e) exp((x + y) . ell)`.
pub fn biased_conductance(cfg: &EnvConfig, e: &EdgeKey) -> f64 {
    let bias = cfg.bias();
    let (x, y) = e.endpoints();
    let mut dot = 0.0;
    for i in 0..cfg.d {
        dot += (x.coord(i) as f64 + y.coord(i) as f64) * bias[i];
    }
    base_conductance(cfg, e) * dot.exp()
}

/// Base conductances of the 2d incident edges of `x`, ordered
/// `+e_1 .. +e_d, -e_1 .. -e_d`.
pub fn incident_base(cfg: &EnvConfig, x: &Point) -> Result<Vec<f64>, EnvError> {
    let mut out = Vec::with_capacity(2 * cfg.d);
    for dir in 0..2 * cfg.d {
        let axis = dir % cfg.d;
        let y = x.step(axis, dir < cfg.d)?;
        let e = canonical_edge(*x, y)?;
        out.push(base_conductance(cfg, &e));
    }
    Ok(out)
}

/// True iff every edge incident to `x` has base conductance in [1/K, K].
pub fn is_k_open(cfg: &EnvConfig, x: &Point) -> bool {
    match incident_base(cfg, x) {
        Ok(cs) => cs.iter().all(|&c| c >= 1.0 / cfg.k && c <= cfg.k),
        Err(_) => false,
    }
}

/// Generalized inverse of the conductance tail `Inv(u) = u^{1/gamma}`
/// (exact for the pure Pareto tail).
pub fn inv_scale(u: f64, gamma: f64) -> Result<f64, EnvError> {
    if u < 1.0 {
        return Err(EnvError::Domain(format!("inv_scale requires u >= 1, got {u}")));
    }
    Ok(u.powf(1.0 / gamma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_edge_normal_form() {
        let a = pt(&[0, 0]);
        let b = pt(&[1, 0]);
        let e1 = canonical_edge(a, b).unwrap();
        let e2 = canonical_edge(b, a).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.endpoints().0, a);
    }

    #[test]
    fn canonical_edge_rejects_non_adjacent() {
        let err = canonical_edge(pt(&[0, 0]), pt(&[2, 0])).unwrap_err();
        assert_eq!(err, EnvError::NonAdjacent);
        assert!(canonical_edge(pt(&[0, 0]), pt(&[0, 0])).is_err());
        assert!(canonical_edge(pt(&[0, 0]), pt(&[1, 1])).is_err());
    }

    #[test]
    fn pareto_inverse_cdf_values() {
        // U = 0.25, gamma = 0.5 -> 0.25^{-2} = 16; U = 1 -> support minimum.
        assert!((pareto_from_unit(0.25, 0.5) - 16.0).abs() < 1e-12);
        assert!((pareto_from_unit(1.0, 0.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn base_conductance_deterministic_and_symmetric() {
        let cfg = EnvConfig::desk(0.5, 0.5, 10.0, 42);
        let x = pt(&[3, -7]);
        let y = pt(&[3, -6]);
        let e = canonical_edge(x, y).unwrap();
        let c1 = base_conductance(&cfg, &e);
        let c2 = base_conductance(&cfg, &canonical_edge(y, x).unwrap());
        assert_eq!(c1, c2);
        assert!(c1 >= 1.0);
        // replay in any order
        let e2 = canonical_edge(pt(&[0, 0]), pt(&[1, 0])).unwrap();
        let a = base_conductance(&cfg, &e2);
        let _ = base_conductance(&cfg, &e);
        assert_eq!(a, base_conductance(&cfg, &e2));
    }

    #[test]
    fn tail_frequency_matches_pareto() {
        // P(c_* >= 16) = 16^{-0.5} = 0.25 at gamma = 0.5.
        let cfg = EnvConfig::desk(0.5, 0.5, 10.0, 7);
        let n = 1_000_000;
        let mut hits = 0u64;
        for i in 0..n {
            let x = pt(&[(i % 30000) as i16 - 15000, (i / 30000) as i16]);
            let y = x.step(0, true).unwrap();
            let e = canonical_edge(x, y).unwrap();
            if base_conductance(&cfg, &e) >= 16.0 {
                hits += 1;
            }
        }
        let frac = hits as f64 / n as f64;
        let se = (0.25 * 0.75 / n as f64).sqrt();
        assert!(
            (frac - 0.25).abs() < 4.0 * se,
            "fraction {frac} deviates from 0.25 by more than 4 SE ({se})"
        );
    }

    #[test]
    fn biased_conductance_formula() {
        // Unit base: e = [(0,0),(1,0)], lambda = 0.5, ell = e1 -> exp(0.5).
        let cfg = EnvConfig::desk(0.5, 0.5, 10.0, 1).with_field(FieldKind::Constant(1.0));
        let e = canonical_edge(pt(&[0, 0]), pt(&[1, 0])).unwrap();
        assert!((biased_conductance(&cfg, &e) - 0.5f64.exp()).abs() < 1e-15);
        // orthogonal edge: exp(0) = 1
        let e = canonical_edge(pt(&[0, 0]), pt(&[0, 1])).unwrap();
        assert!((biased_conductance(&cfg, &e) - 1.0).abs() < 1e-15);
        // e = [(-1,0),(0,0)], base 2 -> 2 exp(-0.5)
        let cfg2 = cfg.with_field(FieldKind::Constant(2.0));
        let e = canonical_edge(pt(&[-1, 0]), pt(&[0, 0])).unwrap();
        assert!((biased_conductance(&cfg2, &e) - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bias_factorisation() {
        let cfg = EnvConfig::desk(0.5, 0.7, 10.0, 99);
        for i in 0..200 {
            let x = pt(&[i as i16 * 3 - 140, (i % 17) as i16]);
            let y = x.step(i % 2, i % 3 == 0).unwrap();
            let e = canonical_edge(x, y).unwrap();
            let ratio = biased_conductance(&cfg, &e) / base_conductance(&cfg, &e);
            let bias = cfg.bias();
            let mut dot = 0.0;
            for j in 0..cfg.d {
                dot += (x.coord(j) as f64 + y.coord(j) as f64) * bias[j];
            }
            assert!((ratio - dot.exp()).abs() <= 1e-12 * dot.exp().abs());
        }
    }

    #[test]
    fn k_open_definition() {
        let open = EnvConfig::desk(0.5, 0.5, 10.0, 1).with_field(FieldKind::Constant(5.0));
        assert!(is_k_open(&open, &pt(&[0, 0])));
        let closed = open.clone().with_field(FieldKind::Constant(16.0));
        assert!(!is_k_open(&closed, &pt(&[0, 0])));
        let tiny = open.with_field(FieldKind::Constant(0.05));
        assert!(!is_k_open(&tiny, &pt(&[0, 0])));
    }

    #[test]
    fn k_open_fraction_closed_form() {
        // P(open) = (1 - K^{-gamma})^{2d} under support [1, inf).
        let cfg = EnvConfig::desk(0.5, 0.5, 10.0, 3);
        let expect = (1.0 - 10.0f64.powf(-0.5)).powi(4);
        let n = 200_000;
        let mut hits = 0u64;
        for i in 0..n {
            let x = pt(&[((i * 3) % 28001) as i16 - 14000, ((i * 7) % 9001) as i16]);
            if is_k_open(&cfg, &x) {
                hits += 1;
            }
        }
        let frac = hits as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (frac - expect).abs() < 4.0 * se,
            "K-open fraction {frac} vs {expect} (se {se})"
        );
    }

    #[test]
    fn inv_scale_values() {
        assert!((inv_scale(100.0, 0.5).unwrap() - 10_000.0).abs() < 1e-9);
        assert!((inv_scale(1.0, 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!(inv_scale(0.5, 0.5).is_err());
    }

    #[test]
    fn inv_scale_tail_identity() {
        // P(c_* > Inv(u)) = 1/u at u = 50, gamma = 0.4.
        let cfg = EnvConfig::new(2, 0.4, 0.5, &[1, 0], 10.0, 8.0, 11).unwrap();
        let threshold = inv_scale(50.0, 0.4).unwrap();
        let n = 1_000_000;
        let mut hits = 0u64;
        for i in 0..n {
            let x = pt(&[(i % 25000) as i16 - 12000, (i / 25000) as i16 + 5]);
            let e = canonical_edge(x, x.step(1, true).unwrap()).unwrap();
            if base_conductance(&cfg, &e) > threshold {
                hits += 1;
            }
        }
        let frac = hits as f64 / n as f64;
        let se = (0.02f64 * 0.98 / n as f64).sqrt();
        assert!((frac - 0.02).abs() < 4.0 * se, "tail fraction {frac} vs 0.02");
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig::new(1, 0.5, 0.5, &[1], 10.0, 8.0, 0).is_err());
        assert!(EnvConfig::new(2, 1.5, 0.5, &[1, 0], 10.0, 8.0, 0).is_err());
        assert!(EnvConfig::new(2, 0.5, 0.0, &[1, 0], 10.0, 8.0, 0).is_err());
        assert!(EnvConfig::new(2, 0.5, 0.5, &[1, 0], 10.0, 4.9, 0).is_err());
        assert!(EnvConfig::new(2, 0.5, 0.5, &[0, 0], 10.0, 8.0, 0).is_err());
        let cfg = EnvConfig::new(2, 0.5, 0.5, &[2, 1], 10.0, 8.0, 0).unwrap();
        let n: f64 = cfg.ell.unit().iter().map(|u| u * u).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn direction_orthonormal_complement() {
        let dir = Direction::from_ints(&[2, 1, 0]).unwrap();
        let basis = dir.orth_basis();
        assert_eq!(basis.len(), 2);
        for b in basis {
            let du: f64 = (0..3).map(|i| b[i] * dir.unit()[i]).sum();
            assert!(du.abs() < 1e-12);
            let nb: f64 = (0..3).map(|i| b[i] * b[i]).sum();
            assert!((nb - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_level_is_exact() {
        let dir = Direction::e1(2);
        assert_eq!(dir.raw_level(&pt(&[5, -3])), 5);
        assert_eq!(dir.level(&pt(&[5, -3])), 5.0);
        let tilted = Direction::from_ints(&[1, 1]).unwrap();
        assert_eq!(tilted.raw_level(&pt(&[2, 3])), 5);
    }
}
