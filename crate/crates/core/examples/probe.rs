use rwrc_core::env::*;
use rwrc_core::experiment::*;
use rwrc_core::stats::sample_one_sided_stable;
use rwrc_core::walk::Stream;
use rayon::prelude::*;
use std::time::Instant;

fn ks_cens(exact_sorted: &[f64], censored: usize, cap: f64, reference: &[f64]) -> f64 {
    let n = (exact_sorted.len() + censored) as f64;
    let m = reference.len() as f64;
    let mut d: f64 = 0.0;
    let mut j = 0usize;
    for (i, &x) in exact_sorted.iter().enumerate() {
        if x >= cap { break; }
        while j < reference.len() && reference[j] <= x { j += 1; }
        d = d.max(((i + 1) as f64 / n - j as f64 / m).abs()).max((i as f64 / n - j as f64 / m).abs());
    }
    let mut i = 0usize;
    for (j, &y) in reference.iter().enumerate() {
        if y >= cap { break; }
        while i < exact_sorted.len() && exact_sorted[i] <= y { i += 1; }
        d = d.max((i as f64 / n - (j + 1) as f64 / m).abs());
    }
    d.max(censored as f64 / n).max(1.0 - reference.partition_point(|&y| y <= cap) as f64 / m)
}

fn refined_fit(sorted: &[f64], censored: usize, s_cap: f64, oracle: &[f64], c0: f64) -> (f64, f64) {
    let eval = |c: f64| {
        let r: Vec<f64> = sorted.iter().map(|s| s / c).collect();
        ks_cens(&r, censored, s_cap / c, oracle)
    };
    let mut best_c = c0;
    let mut best = eval(c0);
    let mut center = c0.ln();
    let mut width = 0.75f64;
    for _ in 0..4 {
        for step in 0..41 {
            let c = (center - width + 2.0 * width * step as f64 / 40.0).exp();
            let d = eval(c);
            if d < best { best = d; best_c = c; }
        }
        center = best_c.ln();
        width /= 8.0;
    }
    (best, best_c)
}

fn main() {
    for (lambda, k, cap) in [(1.25f64, 1000.0f64, 600_000_000usize), (1.1, 3000.0, 1_200_000_000)] {
        let cfg = EnvConfig::desk(0.5, lambda, k, 606).with_clamp(ClampMode::Capped);
        let t0 = Instant::now();
        let per_run: Vec<Vec<usize>> = (0..500usize).into_par_iter().map(|id| {
            collect_records(&cfg, Stream::new(cfg.seed, id as u64), 200, 8.0, cap)
                .map(|(r, _)| confirmed_taus(&r)).unwrap_or_default()
        }).collect();
        let ostream = Stream::new(mix64(cfg.seed ^ 0x0B5E_55ED_0AC1_E000), u64::MAX);
        let mut oracle: Vec<f64> = (0..100_000).map(|i| sample_one_sided_stable(0.5, &ostream, i)).collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let om = oracle[oracle.len()/2];
        print!("lambda {lambda} K {k} cap {cap:.0e} ({:.0?}):", t0.elapsed());
        for n in [50usize, 100, 200] {
            let inv_n = (n as f64).powi(2);
            let mut ex: Vec<f64> = per_run.iter().filter(|t| t.len() >= n).map(|t| t[n-1] as f64 / inv_n).collect();
            let cens = 500 - ex.len();
            ex.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let c0 = ex[(ex.len() + cens)/2.min(ex.len()-1).max(0)] / om;
            let (d, c) = refined_fit(&ex, cens, cap as f64 / inv_n, &oracle, c0);
            print!("  n={n} ks={d:.4} cens={cens} c={c:.1}");
        }
        println!();
    }
}
