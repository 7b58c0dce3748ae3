//! Cross-module invariants and the derived example checks that need more
//! machinery than a unit test: martingale nulls, rank tests, dual-route
//! estimator comparisons.

use rwrc_core::env::{pt, ClampMode, EnvConfig, Point};
use rwrc_core::experiment::confirmed_taus;
use rwrc_core::regen::{extract_regenerations, simulate_enhanced, RegenSession};
use rwrc_core::stats::{between_env_variance, ks_distance, ks_two_sample_critical};
use rwrc_core::twowalk::{
    crossing_index_sets, intersection_count, large_trap_flags, orthogonal_offsets, simulate_pair,
    PairAnalysis,
};
use rwrc_core::walk::Stream;

fn capped(gamma: f64, lambda: f64, k: f64, seed: u64) -> EnvConfig {
    EnvConfig::desk(gamma, lambda, k, seed).with_clamp(ClampMode::Capped)
}

/// Box radii have a decreasing empirical survival curve, and the
/// uniform-box event (every chi below a small power of the scale) holds
/// with high frequency.
#[test]
fn chi_tail_and_uniform_box_event() {
    let cfg = capped(0.5, 1.5, 100.0, 77);
    let mut chis: Vec<u32> = Vec::new();
    for id in 0..30u64 {
        let session =
            RegenSession::new(&cfg, Point::origin(), Stream::new(77, id), 12.0).unwrap();
        if let Ok((records, _)) = session.run(40, 4_000_000) {
            chis.extend(records.iter().filter(|r| !r.censored).map(|r| r.chi));
        }
    }
    assert!(chis.len() > 500, "need a decent chi sample, got {}", chis.len());
    let surv = |m: u32| chis.iter().filter(|&&c| c > m).count() as f64 / chis.len() as f64;
    assert!(surv(1) >= surv(2) && surv(2) >= surv(4) && surv(4) >= surv(8));
    assert!(surv(8) < surv(1), "chi survival is flat");
    // F_{n, eps} shape: chi <= n^eps for n = 16, eps = 0.75 (threshold 8)
    let frac_small = 1.0 - surv(8);
    assert!(
        frac_small > 0.95,
        "fraction of chi <= 8 is only {frac_small}"
    );
}

/// Orthogonal offsets between regeneration points of two walks in
/// independent environments form a centered sequence: the mean of
/// O_j - O_0 sits inside its CI around zero.
#[test]
fn orthogonal_offsets_martingale_null() {
    let u = vec![0.0, 1.0];
    let j_probe = 6;
    let mut diffs: Vec<f64> = Vec::new();
    for id in 0..400u64 {
        // independent environments: different seeds entirely
        let cfg1 = capped(0.5, 1.5, 100.0, 10_000 + id);
        let cfg2 = capped(0.5, 1.5, 100.0, 20_000 + id);
        let run = |cfg: &EnvConfig| {
            RegenSession::new(cfg, Point::origin(), Stream::new(cfg.seed, 1), 8.0)
                .unwrap()
                .run(j_probe + 1, 3_000_000)
        };
        let (Ok((r1, _)), Ok((r2, _))) = (run(&cfg1), run(&cfg2)) else {
            continue;
        };
        let (offs, _) = orthogonal_offsets((&Point::origin(), &Point::origin()), &r1, &r2, &u);
        if offs.len() > j_probe {
            diffs.push(offs[j_probe] - offs[0]);
        }
    }
    assert!(diffs.len() > 300, "too few pairs: {}", diffs.len());
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let half = 1.96 * sd / n.sqrt();
    assert!(
        mean.abs() <= half,
        "offset drift {mean:.4} outside CI ±{half:.4}"
    );
}

/// Every crossing slab contributes at least one intersection site, so
/// |J1| is dominated by the intersection count of a box containing
/// everything.
#[test]
fn crossing_sets_bounded_by_intersections() {
    let cfg = capped(0.5, 1.5, 100.0, 555);
    let mut checked = 0;
    for id in 0..60u64 {
        let pair = simulate_pair(
            &cfg,
            Point::origin(),
            pt(&[0, (id % 3) as i16]),
            (Stream::new(555, 2 * id), Stream::new(555, 2 * id + 1)),
            30_000,
        )
        .unwrap();
        let pa = match PairAnalysis::build(&cfg, &pair, 8.0) {
            Ok(pa) => pa,
            Err(_) => continue,
        };
        let m1 = pa.records1.iter().filter(|r| !r.censored).count();
        let m2 = pa.records2.iter().filter(|r| !r.censored).count();
        let n = m1.min(m2).saturating_sub(1).min(12);
        if n < 2 {
            continue;
        }
        let (j1, j2) =
            crossing_index_sets(&cfg, &pair, &pa.records1, &pa.records2, n).unwrap();
        // box big enough to contain every visited site
        let i_m = intersection_count(&cfg, &pair, 4000, false).count;
        assert!(j1.len() <= i_m, "|J1| = {} > I_m = {i_m}", j1.len());
        assert!(j2.len() <= i_m, "|J2| = {} > I_m = {i_m}", j2.len());
        checked += 1;
    }
    assert!(checked >= 40, "only {checked} pairs checked");
}

/// The marginal law of one walk of a pair equals the single-walk law:
/// two-sample KS on the level at step 400 stays below the 5% critical
/// value.
#[test]
fn pair_marginal_matches_single_walk() {
    let cfg = capped(0.5, 1.5, 100.0, 808);
    let reps = 400usize;
    let mut from_pairs = Vec::with_capacity(reps);
    let mut single = Vec::with_capacity(reps);
    for id in 0..reps as u64 {
        let pair = simulate_pair(
            &cfg,
            Point::origin(),
            pt(&[0, 1]),
            (Stream::new(808, 2 * id), Stream::new(808, 2 * id + 1)),
            400,
        )
        .unwrap();
        from_pairs.push(cfg.ell.level(pair.walk1.positions.last().unwrap()));
        let t = simulate_enhanced(&cfg, Point::origin(), Stream::new(909, id), 400).unwrap();
        single.push(cfg.ell.level(t.positions.last().unwrap()));
    }
    let d = ks_distance(&from_pairs, &single).unwrap();
    let crit = ks_two_sample_critical(reps, reps, 0.05);
    assert!(d < crit, "pair marginal KS {d} >= {crit}");
}

/// One-sided Mann-Whitney rank statistic: standardized U for the
/// hypothesis that `a` stochastically dominates `b`.
fn mann_whitney_z(a: &[f64], b: &[f64]) -> f64 {
    let mut all: Vec<(f64, usize)> = a
        .iter()
        .map(|&x| (x, 0usize))
        .chain(b.iter().map(|&x| (x, 1usize)))
        .collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    // midrank assignment for ties
    let mut rank_sum_a = 0.0;
    let mut i = 0usize;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        for e in &all[i..j] {
            if e.1 == 0 {
                rank_sum_a += mid;
            }
        }
        i = j;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let u = rank_sum_a - na * (na + 1.0) / 2.0;
    let mean = na * nb / 2.0;
    let sd = (na * nb * (na + nb + 1.0) / 12.0).sqrt();
    (u - mean) / sd
}

/// Intervals flagged as containing a large trap last stochastically longer
/// than unflagged ones (one-sided rank test, p < 0.05).
#[test]
fn trap_flagged_intervals_dominate() {
    let cfg = capped(0.5, 1.0, 100.0, 321);
    let mut flagged: Vec<f64> = Vec::new();
    let mut unflagged: Vec<f64> = Vec::new();
    for id in 0..40u64 {
        let t = simulate_enhanced(&cfg, Point::origin(), Stream::new(321, id), 400_000).unwrap();
        let Ok(records) = extract_regenerations(&t, &cfg, 8.0, usize::MAX) else {
            continue;
        };
        // threshold chosen inside the observed conductance range
        let flags = large_trap_flags(&cfg, &t, &records, 500.0);
        let taus: Vec<usize> =
            records.iter().filter(|r| !r.censored).map(|r| r.tau).collect();
        for w in taus.windows(2).enumerate() {
            let (i, pair) = w;
            let dur = (pair[1] - pair[0]) as f64;
            if flags[i + 1] {
                flagged.push(dur);
            } else {
                unflagged.push(dur);
            }
        }
    }
    assert!(
        flagged.len() > 150 && unflagged.len() > 150,
        "unbalanced samples: {} vs {}",
        flagged.len(),
        unflagged.len()
    );
    let z = mann_whitney_z(&flagged, &unflagged);
    assert!(z > 1.645, "flagged intervals not longer: z = {z:.3}");
}

/// Dual-route variance estimate: the same-environment pair product minus
/// the independent-environment product reproduces the corrected
/// between-environment variance.
#[test]
fn variance_identity_two_routes() {
    // synthetic hierarchical data keeps this check fast and exact
    let stream = Stream::new(77, 0);
    let envs = 3000usize;
    let per = 6usize;
    let mut groups: Vec<Vec<f64>> = Vec::with_capacity(envs);
    for e in 0..envs {
        let mu = rwrc_core::stats::sample_standard_normal(&stream, e as u64, 0);
        groups.push(
            (0..per)
                .map(|w| {
                    mu + 1.5
                        * rwrc_core::stats::sample_standard_normal(
                            &stream,
                            (e * per + w) as u64,
                            8,
                        )
                })
                .collect(),
        );
    }
    let route_one = between_env_variance(&groups).unwrap().corrected;
    // route two: E[pair product within env] - (grand mean)^2 over pairs
    let mut within_pair = 0.0;
    let mut count = 0.0;
    for g in &groups {
        for i in 0..g.len() {
            for j in 0..g.len() {
                if i != j {
                    within_pair += g[i] * g[j];
                    count += 1.0;
                }
            }
        }
    }
    within_pair /= count;
    let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / per as f64).collect();
    let mut cross = 0.0;
    let mut cross_n = 0.0;
    for i in 0..means.len() {
        let j = (i + 1) % means.len();
        cross += means[i] * means[j];
        cross_n += 1.0;
    }
    cross /= cross_n;
    let route_two = within_pair - cross;
    assert!(
        (route_one - route_two).abs() < 0.08,
        "routes disagree: {route_one:.4} vs {route_two:.4}"
    );
    assert!((route_one - 1.0).abs() < 0.1, "route one off truth: {route_one:.4}");
}

/// Renewal structure seen through the session driver: increment sequences
/// replay identically and their taus strictly increase.
#[test]
fn session_records_strictly_ordered() {
    let cfg = capped(0.5, 1.5, 100.0, 9009);
    let session = RegenSession::new(&cfg, Point::origin(), Stream::new(9009, 0), 8.0).unwrap();
    let (records, _) = session.run(40, 4_000_000).unwrap();
    let taus = confirmed_taus(&records);
    assert!(taus.windows(2).all(|w| w[1] > w[0]));
}
