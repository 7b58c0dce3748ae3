//! The experiment pipelines behind each subcommand.

use crate::config::{ConfigError, KvConfig};
use crate::manifest::ExperimentManifest;
use crate::output::{csv_table, fmt_f64, write_atomic};
use rwrc_core::env::{ClampMode, EnvConfig, Point};
use rwrc_core::experiment::{
    clock_experiment, collect_records, confirmed_taus, mean_by_scale, pair_batch, PairParams,
};
use rwrc_core::io::{write_trajectory_binary, write_trajectory_jsonl};
use rwrc_core::regen::{
    build_processes, estimate_drift, extract_regenerations, simulate_enhanced, RegenError,
    RegenerationRecord,
};
use rwrc_core::stats::{
    hill_estimator, ks_distance, polynomial_tail_probe, sample_one_sided_stable,
    scaling_exponent_fit, truncated_sum_moment, Functional, StatsReport, VarianceSimParams,
};
use rwrc_core::walk::{Stream, Trajectory};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<RegenError> for CliError {
    fn from(e: RegenError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

fn progress(msg: &str) {
    eprintln!("progress: {msg}");
}

/// Collects records for one replica, through the streaming session in
/// capped mode and through dense simulation plus extraction otherwise.
fn records_for(
    cfg: &EnvConfig,
    stream: Stream,
    target: usize,
    confirm: f64,
    max_steps: usize,
) -> Result<Vec<RegenerationRecord>, RegenError> {
    if cfg.clamp == ClampMode::Capped {
        collect_records(cfg, stream, target, confirm, max_steps).map(|(r, _)| r)
    } else {
        let traj = simulate_enhanced(cfg, Point::origin(), stream, max_steps)?;
        extract_regenerations(&traj, cfg, confirm, usize::MAX)
    }
}

#[derive(Serialize)]
struct ReplicaSummary {
    replica: usize,
    confirmed: usize,
    censored: usize,
    last_tau: usize,
    last_level: f64,
}

#[derive(Serialize)]
struct RegenRowOut {
    replica: usize,
    k: usize,
    tau: usize,
    point: Vec<i16>,
    chi: u32,
    censored: bool,
}

pub fn cmd_simulate(
    kv: &KvConfig,
    cfg: &EnvConfig,
    out: &Path,
) -> Result<ExperimentManifest, CliError> {
    let replicas = kv.usize_or("replicas", 4)?;
    let records_target = kv.usize_or("records", 32)?;
    let confirm = kv.f64_or("confirm", 16.0)?;
    let max_steps = kv.usize_or("max_steps", 4_000_000)?;
    let process_n = kv.usize_or("process_n", 8)?;
    let process_t = kv.f64_or("process_t", 1.0)?;
    let mut manifest = ExperimentManifest::new("simulate", kv.entries.clone(), cfg.seed);
    manifest.ledger_single(replicas);
    if replicas == 0 {
        eprintln!("warning: replica count 0, writing empty outputs");
        write_atomic(&out.join("summary.jsonl"), b"")?;
        write_atomic(&out.join("regenerations.jsonl"), b"")?;
        manifest.outputs = vec!["summary.jsonl".into(), "regenerations.jsonl".into()];
        return Ok(manifest);
    }
    use rayon::prelude::*;
    let results: Vec<Result<Vec<RegenerationRecord>, RegenError>> = (0..replicas)
        .into_par_iter()
        .map(|id| records_for(cfg, Stream::new(cfg.seed, id as u64), records_target, confirm, max_steps))
        .collect();
    let mut summary = String::new();
    let mut regen_out = String::new();
    for (id, res) in results.iter().enumerate() {
        let records = res.as_ref().map_err(|e| CliError::Runtime(e.to_string()))?;
        let confirmed: Vec<&RegenerationRecord> =
            records.iter().filter(|r| !r.censored).collect();
        let row = ReplicaSummary {
            replica: id,
            confirmed: confirmed.len(),
            censored: records.len() - confirmed.len(),
            last_tau: confirmed.last().map_or(0, |r| r.tau),
            last_level: confirmed.last().map_or(0.0, |r| cfg.ell.level(&r.point)),
        };
        summary.push_str(&serde_json::to_string(&row).expect("row"));
        summary.push('\n');
        for r in records.iter() {
            let row = RegenRowOut {
                replica: id,
                k: r.k,
                tau: r.tau,
                point: r.point.coords(cfg.d).to_vec(),
                chi: r.chi,
                censored: r.censored,
            };
            regen_out.push_str(&serde_json::to_string(&row).expect("row"));
            regen_out.push('\n');
        }
    }
    write_atomic(&out.join("summary.jsonl"), summary.as_bytes())?;
    write_atomic(&out.join("regenerations.jsonl"), regen_out.as_bytes())?;
    manifest.outputs = vec!["summary.jsonl".into(), "regenerations.jsonl".into()];
    // rescaled processes from the first replica with enough records
    if let Some(records) = results.iter().flatten().find(|r| {
        r.iter().filter(|x| !x.censored).count() >= (process_t * process_n as f64) as usize + 2
    }) {
        let sample =
            build_processes(records, Point::origin(), cfg, process_n, process_t, None)?;
        let mut buf = Vec::new();
        rwrc_core::io::write_process_csv(&mut buf, &sample, cfg)?;
        write_atomic(&out.join("process.csv"), &buf)?;
        manifest.outputs.push("process.csv".into());
    }
    // optional trajectory dump in both documented formats
    match kv.raw("dump") {
        Some("jsonl") | Some("binary") => {
            let steps = kv.usize_or("dump_steps", 1000)?;
            let traj =
                rwrc_core::walk::simulate_path(cfg, Point::origin(), Stream::new(cfg.seed, 0), steps)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            dump_trajectory(kv.raw("dump").unwrap(), &traj, cfg, out, &mut manifest)?;
        }
        None => {}
        Some(other) => {
            return Err(CliError::Config(ConfigError {
                message: format!("key `dump`: expected `jsonl` or `binary`, got {other:?}"),
            }))
        }
    }
    progress(&format!("simulate: {replicas} replicas done"));
    Ok(manifest)
}

fn dump_trajectory(
    format: &str,
    traj: &Trajectory,
    cfg: &EnvConfig,
    out: &Path,
    manifest: &mut ExperimentManifest,
) -> Result<(), CliError> {
    match format {
        "jsonl" => {
            let mut buf = Vec::new();
            write_trajectory_jsonl(&mut buf, traj, cfg.d)?;
            write_atomic(&out.join("trajectory.jsonl"), &buf)?;
            manifest.outputs.push("trajectory.jsonl".into());
        }
        "binary" => {
            let mut buf = Vec::new();
            write_trajectory_binary(&mut buf, traj, cfg.d)?;
            write_atomic(&out.join("trajectory.rwtb"), &buf)?;
            manifest.outputs.push("trajectory.rwtb".into());
        }
        _ => unreachable!(),
    }
    Ok(())
}

pub fn cmd_pair(
    kv: &KvConfig,
    cfg: &EnvConfig,
    out: &Path,
) -> Result<ExperimentManifest, CliError> {
    let pairs = kv.usize_or("pairs", 8)?;
    let params = PairParams {
        n_grid: kv.usize_list_or("n_grid", &[64, 128, 256, 512])?,
        epsilon: kv.f64_or("epsilon", 0.05)?,
        confirm_distance: kv.f64_or("confirm", 16.0)?,
        max_steps: kv.usize_or("max_steps", 6_000_000)?,
        level_buffer: kv.f64_or("level_buffer", 24.0)?,
        crossing_cap: kv.usize_or("crossing_cap", 48)?,
    };
    let mut manifest = ExperimentManifest::new("pair", kv.entries.clone(), cfg.seed);
    manifest.ledger_pairs(pairs);
    if pairs == 0 {
        eprintln!("warning: pair count 0, writing empty outputs");
        write_atomic(&out.join("pairs.jsonl"), b"")?;
        manifest.outputs = vec!["pairs.jsonl".into()];
        return Ok(manifest);
    }
    let (rows, failed) = pair_batch(cfg, pairs, &params);
    if !failed.is_empty() {
        eprintln!("warning: {} pairs produced no statistics: {failed:?}", failed.len());
    }
    let mut jsonl = String::new();
    for r in &rows {
        jsonl.push_str(&serde_json::to_string(r).expect("row"));
        jsonl.push('\n');
    }
    write_atomic(&out.join("pairs.jsonl"), jsonl.as_bytes())?;
    // aggregation keyed by n
    let inter = mean_by_scale(&rows, |r| r.intersections as f64);
    let close = mean_by_scale(&rows, |r| r.close_jrl as f64);
    let sep = mean_by_scale(&rows, |r| if r.separated { 1.0 } else { 0.0 });
    let j1 = mean_by_scale(&rows, |r| r.j1 as f64);
    let j2 = mean_by_scale(&rows, |r| r.j2 as f64);
    let counted: BTreeMap<usize, usize> =
        params.n_grid.iter().map(|&n| (n, rows.iter().filter(|r| r.n == n).count())).collect();
    let table: Vec<Vec<String>> = inter
        .iter()
        .enumerate()
        .map(|(i, &(n, m))| {
            vec![
                fmt_f64(n),
                fmt_f64(m),
                fmt_f64(close[i].1),
                fmt_f64(sep[i].1),
                fmt_f64(j1[i].1),
                fmt_f64(j2[i].1),
                counted[&(n as usize)].to_string(),
            ]
        })
        .collect();
    let csv = csv_table(
        &["n", "mean_intersections", "mean_close_jrl", "separated_fraction", "mean_j1", "mean_j2", "pairs"],
        &table,
    );
    write_atomic(&out.join("aggregate.csv"), csv.as_bytes())?;
    manifest.outputs = vec!["pairs.jsonl".into(), "aggregate.csv".into()];
    progress(&format!("pair: {pairs} pairs, {} rows", rows.len()));
    Ok(manifest)
}

pub fn cmd_scaling(
    kv: &KvConfig,
    cfg: &EnvConfig,
    out: &Path,
) -> Result<ExperimentManifest, CliError> {
    let runs = kv.usize_or("runs", 100)?;
    let n_grid = kv.usize_list_or("n_grid", &[50, 100, 200])?;
    let confirm = kv.f64_or("confirm", 16.0)?;
    let max_steps = kv.usize_or("max_steps", 30_000_000)?;
    let oracle_draws = kv.usize_or("oracle_draws", 200_000)?;
    let path_runs = kv.usize_or("path_runs", 8)?;
    let path_points = kv.usize_or("path_points", 32)?;
    let t_max = kv.f64_or("T", 1.0)?;
    let mut manifest = ExperimentManifest::new("scaling", kv.entries.clone(), cfg.seed);
    manifest.ledger_single(runs);
    if runs == 0 {
        eprintln!("warning: run count 0, writing empty outputs");
        write_atomic(&out.join("clock.csv"), b"n,c_hat,ci_low,ci_high,ks,samples\n")?;
        manifest.outputs = vec!["clock.csv".into()];
        return Ok(manifest);
    }
    let report = clock_experiment(cfg, runs, &n_grid, confirm, max_steps, oracle_draws)?;
    let clock_rows: Vec<Vec<String>> = report
        .scales
        .iter()
        .map(|s| {
            vec![
                s.n.to_string(),
                fmt_f64(s.c_hat),
                fmt_f64(s.c_hat_ci.0),
                fmt_f64(s.c_hat_ci.1),
                fmt_f64(s.ks_distance),
                s.samples.len().to_string(),
                s.censored.to_string(),
            ]
        })
        .collect();
    write_atomic(
        &out.join("clock.csv"),
        csv_table(&["n", "c_hat", "ci_low", "ci_high", "ks", "samples", "censored"], &clock_rows)
            .as_bytes(),
    )?;
    let mut sample_rows = Vec::new();
    for s in &report.scales {
        for (run, v) in s.samples.iter().enumerate() {
            sample_rows.push(vec![s.n.to_string(), run.to_string(), fmt_f64(*v)]);
        }
    }
    write_atomic(
        &out.join("clock_samples.csv"),
        csv_table(&["n", "run", "s_n_1"], &sample_rows).as_bytes(),
    )?;
    // position paths at the largest scale, rescaled per the two limits
    let n_big = *n_grid.iter().max().unwrap();
    let drift_records = records_for(cfg, Stream::new(cfg.seed, runs as u64), 64, confirm, max_steps)?;
    let v_hat = estimate_drift(&drift_records, cfg.d).map_err(CliError::from)?;
    let norm: f64 = v_hat.iter().map(|x| x * x).sum::<f64>().sqrt();
    let v0: Vec<f64> = v_hat.iter().map(|x| x / norm).collect();
    let mut path_rows = Vec::new();
    for run in 0..path_runs {
        let steps = ((n_big as f64) * t_max).ceil() as usize;
        let stream = Stream::new(cfg.seed, (runs + 1 + run) as u64);
        let traj = simulate_enhanced(cfg, Point::origin(), stream, steps)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        // backtrack bound from the recorded boxes of the same walk
        let recs = extract_regenerations(&traj, cfg, confirm, usize::MAX).ok();
        let max_chi =
            recs.as_ref().map_or(0, |rs| rs.iter().map(|r| r.chi).max().unwrap_or(0));
        let mut peak = f64::NEG_INFINITY;
        for j in 0..=path_points {
            let t = t_max * j as f64 / path_points as f64;
            let idx = ((n_big as f64 * t).floor() as usize).min(traj.positions.len() - 1);
            let p = &traj.positions[idx];
            let proj: f64 = (0..cfg.d).map(|i| p.coord(i) as f64 * v0[i]).sum();
            peak = peak.max(proj);
            let backtrack = peak - proj;
            let flagged = backtrack > (max_chi as f64) + 1.0;
            let mut row = vec![
                run.to_string(),
                fmt_f64(t),
                fmt_f64(proj / (n_big as f64).powf(cfg.gamma)),
            ];
            for i in 0..cfg.d {
                let orth = p.coord(i) as f64 - proj * v0[i];
                row.push(fmt_f64(orth / (n_big as f64).powf(cfg.gamma / 2.0)));
            }
            row.push((flagged as u8).to_string());
            path_rows.push(row);
        }
    }
    let mut header = vec!["run".to_string(), "t".to_string(), "proj_scaled".to_string()];
    for i in 1..=cfg.d {
        header.push(format!("orth{i}_scaled"));
    }
    header.push("backtrack_flag".to_string());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_atomic(
        &out.join("paths.csv"),
        csv_table(&header_refs, &path_rows).as_bytes(),
    )?;
    manifest.outputs =
        vec!["clock.csv".into(), "clock_samples.csv".into(), "paths.csv".into()];
    progress(&format!("scaling: {} scales over {} runs", report.scales.len(), report.runs));
    Ok(manifest)
}

fn parse_functional(kv: &KvConfig) -> Result<Functional, CliError> {
    let times = kv.f64_list_or("times", &[1.0])?;
    let lambdas = kv.f64_list_or("lambdas", &[1.0])?;
    match kv.raw("functional").unwrap_or("laplace_clock") {
        "constant" => Ok(Functional::Constant(kv.f64_or("constant", 1.0)?)),
        "laplace_clock" => Ok(Functional::LaplaceClock { lambdas, times }),
        "clipped_position" => Ok(Functional::ClippedPosition {
            coord: kv.usize_or("coord", 0)?,
            clip: kv.f64_or("clip", 1.0)?,
            times,
        }),
        "fourier_real" | "fourier_imag" => {
            // one lambda vector of dimension d + 1 reused across times
            let d = kv.usize_or("d", 2)?;
            let mut l = lambdas;
            l.resize(d + 1, 0.5);
            let lv = vec![l; times.len()];
            if kv.raw("functional") == Some("fourier_imag") {
                Ok(Functional::FourierImag { lambdas: lv, times })
            } else {
                Ok(Functional::FourierReal { lambdas: lv, times })
            }
        }
        other => Err(CliError::Config(ConfigError {
            message: format!("key `functional`: unknown preset {other:?}"),
        })),
    }
}

pub fn cmd_variance(
    kv: &KvConfig,
    cfg: &EnvConfig,
    out: &Path,
) -> Result<ExperimentManifest, CliError> {
    let b = kv.f64_or("b", 1.5)?;
    if !(b > 1.0 && b < 2.0) {
        return Err(CliError::Config(ConfigError {
            message: format!("key `b`: must lie in (1, 2), got {b}"),
        }));
    }
    let k_min = kv.usize_or("k_min", 4)?;
    let k_max = kv.usize_or("k_max", 10)?;
    let environments = kv.usize_or("environments", 20)?;
    let walks = kv.usize_or("walks", 8)?;
    let functional = parse_functional(kv)?;
    let sim = VarianceSimParams {
        confirm_distance: kv.f64_or("confirm", 16.0)?,
        max_steps_per_walk: kv.usize_or("max_steps", 30_000_000)?,
    };
    let mut manifest = ExperimentManifest::new("variance", kv.entries.clone(), cfg.seed);
    manifest.ledger_single(environments);
    let mut rows = Vec::new();
    for k in k_min..=k_max {
        let n = (b.powi(k as i32)).ceil() as usize;
        let point = rwrc_core::stats::nested_variance(cfg, &functional, n, environments, walks, &sim)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        // normal-approximation interval for a variance over `environments`
        let rel = 1.96 * (2.0 / (environments as f64 - 1.0)).sqrt();
        rows.push(vec![
            n.to_string(),
            fmt_f64(point.variance),
            fmt_f64(point.variance * (1.0 - rel).max(0.0)),
            fmt_f64(point.variance * (1.0 + rel)),
            environments.to_string(),
            walks.to_string(),
        ]);
        progress(&format!("variance: scale n = {n} done"));
    }
    write_atomic(
        &out.join("variance.csv"),
        csv_table(&["n", "value", "ci_low", "ci_high", "environments", "walks_per_environment"], &rows)
            .as_bytes(),
    )?;
    manifest.outputs = vec!["variance.csv".into()];
    Ok(manifest)
}

pub fn cmd_stats(
    kv: &KvConfig,
    cfg: &EnvConfig,
    out: &Path,
) -> Result<ExperimentManifest, CliError> {
    let draws = kv.usize_or("draws", 1_000_000)?;
    let hill_k = kv.usize_or("hill_k", 10_000)?;
    let moment_reps = kv.usize_or("moment_reps", 4_000)?;
    let mut report = StatsReport::new("stats")
        .with_config("draws", draws)
        .with_config("hill_k", hill_k)
        .with_config("seed", cfg.seed);
    report.seeds.push(cfg.seed);
    let stream = Stream::new(cfg.seed, 0);
    for (gi, gamma) in [0.3f64, 0.5, 0.7].into_iter().enumerate() {
        let samples: Vec<f64> = (0..draws)
            .map(|i| {
                rwrc_core::env::pareto_from_unit(
                    stream.uniform((gi * draws + i) as u64, 0),
                    gamma,
                )
            })
            .collect();
        let fit = hill_estimator(&samples, hill_k.min(draws / 10))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        report.metric(&format!("hill_gamma_hat_{gamma}"), fit.gamma_hat);
        // stable oracle transform error at lambda = 1
        let ssum: f64 = (0..draws.min(200_000))
            .map(|i| (-sample_one_sided_stable(gamma, &stream, (gi * draws + i) as u64)).exp())
            .sum();
        let mc = ssum / draws.min(200_000) as f64;
        report.metric(
            &format!("stable_laplace_error_{gamma}"),
            (mc - (-1.0f64).exp()).abs(),
        );
    }
    // KS self-distance of two halves of the same law
    let a: Vec<f64> = (0..20_000).map(|i| stream.uniform(i, 3)).collect();
    let b: Vec<f64> = (0..20_000).map(|i| stream.uniform(i, 4)).collect();
    report.metric(
        "ks_uniform_self",
        ks_distance(&a, &b).map_err(|e| CliError::Runtime(e.to_string()))?,
    );
    // truncated-moment boundedness slope at gamma = 0.5, p = 1
    let pts: Vec<(f64, f64)> = [10usize, 100, 1000]
        .iter()
        .map(|&n| {
            (n as f64, truncated_sum_moment(0.5, n, 1.0, 0.0, moment_reps, &stream).value)
        })
        .collect();
    let slope = scaling_exponent_fit(&pts).map_err(|e| CliError::Runtime(e.to_string()))?;
    report.metric("truncated_moment_slope_p1", slope.slope);
    let probe = polynomial_tail_probe(100, 200_000, &stream);
    report.metric("polynomial_tail_p_100", probe.estimate);
    let json = serde_json::to_string_pretty(&report).expect("report");
    write_atomic(&out.join("report.json"), json.as_bytes())?;
    let mut manifest = ExperimentManifest::new("stats", kv.entries.clone(), cfg.seed);
    manifest.outputs = vec!["report.json".into()];
    Ok(manifest)
}

/// Shared epilogue: manifest plus the timing sidecar.
pub fn write_manifest(
    out: &Path,
    manifest: &ExperimentManifest,
    runtime_secs: f64,
    threads: usize,
) -> Result<(), CliError> {
    write_atomic(&out.join("manifest.json"), manifest.to_json().as_bytes())?;
    let info = crate::manifest::RunInfo {
        experiment: manifest.experiment.clone(),
        runtime_secs,
        threads,
    };
    write_atomic(
        &out.join("run_info.json"),
        serde_json::to_string_pretty(&info).expect("info").as_bytes(),
    )?;
    Ok(())
}

// used by tests to keep the taus of a batch comparable
pub fn batch_taus(records: &[Vec<RegenerationRecord>]) -> Vec<Vec<usize>> {
    records.iter().map(|r| confirmed_taus(r)).collect()
}
