//! Experiment orchestration for the conductance-walk simulator: config
//! parsing, deterministic seed management and the named pipelines.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

use commands::CliError;
use config::{resolve_seed, KvConfig};
use std::path::PathBuf;
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const USAGE: &str = "\
rwrc - biased random walk among heavy-tailed conductances

USAGE:
  rwrc <simulate|pair|scaling|variance|stats> --config PATH [--seed N] [--out DIR] [--threads N]

SUBCOMMANDS:
  simulate   single-walk batches: summaries, regeneration records, processes
  pair       two-walk batches: intersections, joint levels, separation
  scaling    rescaled position/clock marginals against the stable oracle
  variance   nested environment-variance curve along geometric scales
  stats      estimator self-checks written as a JSON report

FLAGS:
  --config PATH   key = value configuration file (required)
  --seed N        master seed override (also: RWRC_SEED env var)
  --out DIR       output directory (default: out)
  --threads N     worker threads (default: all cores)
";

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: String,
    pub config_path: PathBuf,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: usize,
}

fn parse_args(args: &[String]) -> Result<Invocation, String> {
    if args.is_empty() {
        return Err("missing subcommand".into());
    }
    let command = args[0].clone();
    if !["simulate", "pair", "scaling", "variance", "stats"].contains(&command.as_str()) {
        return Err(format!("unknown subcommand {command:?}"));
    }
    let mut config_path = None;
    let mut seed = None;
    let mut out = PathBuf::from("out");
    let mut threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut it = args[1..].iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                config_path =
                    Some(PathBuf::from(it.next().ok_or("missing value for --config")?));
            }
            "--seed" => {
                seed = Some(
                    it.next()
                        .ok_or("missing value for --seed")?
                        .parse::<u64>()
                        .map_err(|e| format!("bad --seed: {e}"))?,
                );
            }
            "--out" => out = PathBuf::from(it.next().ok_or("missing value for --out")?),
            "--threads" => {
                threads = it
                    .next()
                    .ok_or("missing value for --threads")?
                    .parse::<usize>()
                    .map_err(|e| format!("bad --threads: {e}"))?
                    .max(1);
            }
            "--help" | "-h" => return Err(USAGE.to_string()),
            other => return Err(format!("unknown flag {other:?}")),
        }
    }
    Ok(Invocation {
        command,
        config_path: config_path.ok_or("missing --config PATH")?,
        seed,
        out,
        threads,
    })
}

/// Runs one invocation and returns the process exit code. All data outputs
/// are deterministic functions of the configuration and effective seed,
/// independent of the thread count.
pub fn run(args: &[String]) -> i32 {
    let inv = match parse_args(args) {
        Ok(inv) => inv,
        Err(msg) => {
            eprintln!("{msg}\n\n{USAGE}");
            return EXIT_CONFIG;
        }
    };
    match execute(&inv) {
        Ok(()) => EXIT_OK,
        Err(CliError::Config(e)) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("runtime error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Library entry used by tests; identical behaviour to `run`.
pub fn execute(inv: &Invocation) -> Result<(), CliError> {
    let kv = KvConfig::load(&inv.config_path)?;
    let env_seed = std::env::var("RWRC_SEED").ok();
    let seed = resolve_seed(inv.seed, env_seed.as_deref())?;
    let cfg = kv.env_config(seed)?;
    std::fs::create_dir_all(&inv.out)
        .map_err(|e| CliError::Runtime(format!("cannot create output dir: {e}")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(inv.threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let start = Instant::now();
    let manifest = pool.install(|| match inv.command.as_str() {
        "simulate" => commands::cmd_simulate(&kv, &cfg, &inv.out),
        "pair" => commands::cmd_pair(&kv, &cfg, &inv.out),
        "scaling" => commands::cmd_scaling(&kv, &cfg, &inv.out),
        "variance" => commands::cmd_variance(&kv, &cfg, &inv.out),
        "stats" => commands::cmd_stats(&kv, &cfg, &inv.out),
        _ => unreachable!("validated subcommand"),
    })?;
    commands::write_manifest(&inv.out, &manifest, start.elapsed().as_secs_f64(), inv.threads)
}
