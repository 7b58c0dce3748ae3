//! Key/value configuration files: `key = value` lines, `#` comments.

use rwrc_core::env::{ClampMode, EnvConfig, FieldKind};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError { message: msg.into() }
}

/// Parsed configuration: an ordered key/value map plus typed accessors that
/// name the offending key in every diagnostic.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    pub entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<KvConfig, ConfigError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    lineno + 1
                )));
            };
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(KvConfig { entries })
    }

    pub fn load(path: &Path) -> Result<KvConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        KvConfig::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| err(format!("missing required key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.require(key)?
            .parse()
            .map_err(|e| err(format!("key `{key}`: not a number ({e})")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            Some(v) => v.parse().map_err(|e| err(format!("key `{key}`: not a number ({e})"))),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            Some(v) => v.parse().map_err(|e| err(format!("key `{key}`: not an integer ({e})"))),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.raw(key) {
            Some(v) => v.parse().map_err(|e| err(format!("key `{key}`: not an integer ({e})"))),
            None => Ok(default),
        }
    }

    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, ConfigError> {
        match self.raw(key) {
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| err(format!("key `{key}`: bad list entry ({e})")))
                })
                .collect(),
            None => Ok(default.to_vec()),
        }
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.raw(key) {
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| err(format!("key `{key}`: bad list entry ({e})")))
                })
                .collect(),
            None => Ok(default.to_vec()),
        }
    }

    /// Builds the environment from the keys `d, gamma, lambda, ell, K,
    /// alpha, seed` plus the optional `clamp` and `constant_field`.
    /// `seed_override` (CLI flag or RWRC_SEED) wins over the file.
    pub fn env_config(&self, seed_override: Option<u64>) -> Result<EnvConfig, ConfigError> {
        let d = self.usize_or("d", 2)?;
        let gamma = self.f64("gamma")?;
        let lambda = self.f64("lambda")?;
        let k = self.f64("K")?;
        let alpha = self.f64_or("alpha", if d <= 4 { 8.0 } else { (d + 4) as f64 })?;
        let ell: Vec<i64> = match self.raw("ell") {
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| err(format!("key `ell`: bad component ({e})")))
                })
                .collect::<Result<_, _>>()?,
            None => {
                let mut e1 = vec![0i64; d];
                e1[0] = 1;
                e1
            }
        };
        let seed = match seed_override {
            Some(s) => s,
            None => self.u64_or("seed", 0)?,
        };
        let mut cfg = EnvConfig::new(d, gamma, lambda, &ell, k, alpha, seed)
            .map_err(|e| err(format!("invalid model parameters: {e}")))?;
        match self.raw("clamp") {
            None | Some("printed") => {}
            Some("capped") => cfg = cfg.with_clamp(ClampMode::Capped),
            Some(other) => {
                return Err(err(format!(
                    "key `clamp`: expected `printed` or `capped`, got {other:?}"
                )))
            }
        }
        if let Some(v) = self.raw("constant_field") {
            let c: f64 =
                v.parse().map_err(|e| err(format!("key `constant_field`: not a number ({e})")))?;
            cfg = cfg.with_field(FieldKind::Constant(c));
        }
        Ok(cfg)
    }
}

/// Resolves the effective seed: `--seed` flag, then `RWRC_SEED`, then the
/// config file.
pub fn resolve_seed(flag: Option<u64>, env_var: Option<&str>) -> Result<Option<u64>, ConfigError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match env_var {
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| err(format!("RWRC_SEED: not an integer ({e})"))),
        None => Ok(None),
    }
}
