//! Acceptance criterion 12: any manifest re-run reproduces every data
//! artifact byte-for-byte (timestamps live only in run_info.json), across
//! worker counts 1, 4 and 8.

use rwrc_cli::{execute, Invocation};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.conf");
    fs::write(&path, body).unwrap();
    path
}

/// Data artifacts of a run: everything except the timing sidecar.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().to_string();
        if name == "run_info.json" {
            continue;
        }
        assert!(
            !name.ends_with(".partial"),
            "partial artifact left behind: {name}"
        );
        out.insert(name, fs::read(entry.path()).unwrap());
    }
    out
}

fn run_once(command: &str, config: &Path, out: &Path, threads: usize) {
    let inv = Invocation {
        command: command.to_string(),
        config_path: config.to_path_buf(),
        seed: None,
        out: out.to_path_buf(),
        threads,
    };
    execute(&inv).unwrap_or_else(|e| panic!("{command} with {threads} threads failed: {e}"));
}

#[test]
fn criterion_12_reproducibility_across_threads() {
    let base = std::env::temp_dir().join(format!("rwrc-accept-{}", std::process::id()));
    fs::create_dir_all(&base).unwrap();
    let config = write_config(
        &base,
        "gamma = 0.5\nlambda = 1.5\nK = 100\nseed = 9090\nclamp = capped\n\
         replicas = 6\nrecords = 10\nconfirm = 8\nmax_steps = 4000000\n\
         pairs = 3\nn_grid = 16,32\nruns = 10\noracle_draws = 20000\npath_runs = 2\n\
         environments = 4\nwalks = 3\nk_min = 3\nk_max = 4\ndump = binary\n",
    );
    for command in ["simulate", "pair", "scaling", "variance", "stats"] {
        let mut reference: Option<BTreeMap<String, Vec<u8>>> = None;
        for threads in [1usize, 4, 8] {
            let out = base.join(format!("{command}-{threads}"));
            run_once(command, &config, &out, threads);
            let arts = artifacts(&out);
            assert!(!arts.is_empty(), "{command}: no artifacts written");
            match &reference {
                None => reference = Some(arts),
                Some(r) => {
                    assert_eq!(
                        r.keys().collect::<Vec<_>>(),
                        arts.keys().collect::<Vec<_>>(),
                        "{command}: artifact sets differ across thread counts"
                    );
                    for (name, bytes) in r {
                        assert_eq!(
                            bytes,
                            arts.get(name).unwrap(),
                            "{command}/{name}: bytes differ across thread counts"
                        );
                    }
                }
            }
        }
        // re-run with the same thread count: byte-identical again
        let out_a = base.join(format!("{command}-1"));
        let out_b = base.join(format!("{command}-rerun"));
        run_once(command, &config, &out_b, 1);
        assert_eq!(
            artifacts(&out_a),
            artifacts(&out_b),
            "{command}: re-run is not byte-identical"
        );
        println!("criterion 12 PASS ({command}): identical across threads 1/4/8 and re-runs");
    }
    fs::remove_dir_all(&base).ok();
}

/// Config validation names the offending key and exits with the config
/// code; replica count zero is a warning-only success.
#[test]
fn cli_validation_contracts() {
    let base = std::env::temp_dir().join(format!("rwrc-valid-{}", std::process::id()));
    fs::create_dir_all(&base).unwrap();
    // missing gamma
    let bad = write_config(&base, "lambda = 0.5\nK = 10\n");
    let inv = Invocation {
        command: "simulate".into(),
        config_path: bad,
        seed: None,
        out: base.join("bad"),
        threads: 1,
    };
    let err = execute(&inv).unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains("gamma"), "diagnostic must name the key: {msg}");
    // b outside (1, 2) rejected for the variance pipeline
    let badb = base.join("badb.conf");
    fs::write(&badb, "gamma = 0.5\nlambda = 1.0\nK = 10\nclamp = capped\nb = 2.5\n").unwrap();
    let inv = Invocation {
        command: "variance".into(),
        config_path: badb,
        seed: None,
        out: base.join("badb"),
        threads: 1,
    };
    let msg = format!("{}", execute(&inv).unwrap_err());
    assert!(msg.contains('b'), "diagnostic must name b: {msg}");
    // zero replicas: success with empty outputs
    let zero = base.join("zero.conf");
    fs::write(
        &zero,
        "gamma = 0.5\nlambda = 1.5\nK = 100\nclamp = capped\nreplicas = 0\nseed = 4\n",
    )
    .unwrap();
    let inv = Invocation {
        command: "simulate".into(),
        config_path: zero,
        seed: None,
        out: base.join("zero"),
        threads: 1,
    };
    execute(&inv).unwrap();
    assert_eq!(fs::read(base.join("zero/summary.jsonl")).unwrap(), b"");
    fs::remove_dir_all(&base).ok();
}

/// The --seed flag and RWRC_SEED override the config file seed; the
/// resulting artifacts reflect the effective seed.
#[test]
fn seed_override_changes_outputs() {
    let base = std::env::temp_dir().join(format!("rwrc-seed-{}", std::process::id()));
    fs::create_dir_all(&base).unwrap();
    let config = write_config(
        &base,
        "gamma = 0.5\nlambda = 1.5\nK = 100\nseed = 1\nclamp = capped\n\
         replicas = 2\nrecords = 6\nconfirm = 8\nmax_steps = 2000000\n",
    );
    let mk = |seed: Option<u64>, out: &str| Invocation {
        command: "simulate".into(),
        config_path: config.clone(),
        seed,
        out: base.join(out),
        threads: 1,
    };
    execute(&mk(None, "s1")).unwrap();
    execute(&mk(Some(2), "s2")).unwrap();
    execute(&mk(Some(2), "s2b")).unwrap();
    let a = fs::read(base.join("s1/regenerations.jsonl")).unwrap();
    let b = fs::read(base.join("s2/regenerations.jsonl")).unwrap();
    let b2 = fs::read(base.join("s2b/regenerations.jsonl")).unwrap();
    assert_ne!(a, b, "seed override had no effect");
    assert_eq!(b, b2, "same effective seed must reproduce");
    let manifest = fs::read_to_string(base.join("s2/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 2"));
    fs::remove_dir_all(&base).ok();
}
