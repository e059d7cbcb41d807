//! Experiment configuration.
//!
//! A flat TOML file. Simulation parameters use their field names (`beta` is
//! accepted for `loading`). `max_groups`, `gamma` and `n_small_cells` take a
//! scalar or a list; a list turns the key into a sweep axis. Further keys:
//! `policy`, `deployment` (string or list), `seed`, `out`, `ratecdf`.

use std::fs;
use std::path::{Path, PathBuf};

use hetnet_core::sim::Policy;
use hetnet_core::{Deployment, SimParams};
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error(transparent)]
    Params(#[from] hetnet_core::Error),
}

fn field_err(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Also write per-group long-term rates.
    pub ratecdf: bool,
    pub policies: Vec<Policy>,
    pub deployments: Vec<Deployment>,
    pub groups: Vec<usize>,
    pub gammas: Vec<f64>,
    pub small_cells: Vec<usize>,
    pub params: SimParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let params = SimParams::default();
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            ratecdf: false,
            policies: Policy::ALL.to_vec(),
            deployments: Deployment::ALL.to_vec(),
            groups: (1..=10).collect(),
            gammas: vec![params.gamma],
            small_cells: vec![params.n_small_cells],
            params,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub policies: Option<Vec<Policy>>,
    pub deployments: Option<Vec<Deployment>>,
    pub groups: Option<Vec<usize>>,
    pub gammas: Option<Vec<f64>>,
    pub small_cells: Option<Vec<usize>>,
    pub drops: Option<usize>,
    pub slots: Option<usize>,
    pub ratecdf: bool,
}

fn one_or_many<T>(field: &str, value: Value, item: impl Fn(&Value) -> Option<T>) -> Result<Vec<T>, ConfigError> {
    let bad = || field_err(field, format!("unexpected value {value}"));
    match &value {
        Value::Array(xs) => xs.iter().map(|x| item(x).ok_or_else(bad)).collect(),
        scalar => Ok(vec![item(scalar).ok_or_else(bad)?]),
    }
}

fn as_usize(v: &Value) -> Option<usize> {
    v.as_integer().and_then(|i| usize::try_from(i).ok())
}

fn as_f64(v: &Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn parse_named<T: std::str::FromStr>(field: &str, value: Value) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    one_or_many(field, value, |v| v.as_str().map(str::to_string))?
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| field_err(field, e.to_string())))
        .collect()
}

/// Parses config text; missing keys take the reference defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let mut cfg = ExperimentConfig::default();
    if let Some(v) = table.remove("seed") {
        cfg.seed = v
            .as_integer()
            .and_then(|i| u64::try_from(i).ok())
            .ok_or_else(|| field_err("seed", "expected a nonnegative integer"))?;
    }
    if let Some(v) = table.remove("out") {
        cfg.out = PathBuf::from(v.as_str().ok_or_else(|| field_err("out", "expected a string"))?);
    }
    if let Some(v) = table.remove("ratecdf") {
        cfg.ratecdf = v.as_bool().ok_or_else(|| field_err("ratecdf", "expected a boolean"))?;
    }
    for key in ["policy", "policies"] {
        if let Some(v) = table.remove(key) {
            cfg.policies = parse_named(key, v)?;
        }
    }
    for key in ["deployment", "deployments"] {
        if let Some(v) = table.remove(key) {
            cfg.deployments = parse_named(key, v)?;
        }
    }
    if let Some(v) = table.remove("max_groups") {
        cfg.groups = one_or_many("max_groups", v, as_usize)?;
    }
    if let Some(v) = table.remove("gamma") {
        cfg.gammas = one_or_many("gamma", v, as_f64)?;
    }
    if let Some(v) = table.remove("n_small_cells") {
        cfg.small_cells = one_or_many("n_small_cells", v, as_usize)?;
    }
    cfg.params = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    cfg.sync_params();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

impl ExperimentConfig {
    /// Keeps the scalar copies in `params` equal to the first sweep value.
    fn sync_params(&mut self) {
        if let Some(&g) = self.groups.first() {
            self.params.max_groups = g;
        }
        if let Some(&gamma) = self.gammas.first() {
            self.params.gamma = gamma;
        }
        if let Some(&nf) = self.small_cells.first() {
            self.params.n_small_cells = nf;
        }
    }

    pub fn apply(&mut self, o: Overrides) -> Result<(), ConfigError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = o.out {
            self.out = out;
        }
        if let Some(p) = o.policies {
            self.policies = p;
        }
        if let Some(d) = o.deployments {
            self.deployments = d;
        }
        if let Some(g) = o.groups {
            self.groups = g;
        }
        if let Some(g) = o.gammas {
            self.gammas = g;
        }
        if let Some(n) = o.small_cells {
            self.small_cells = n;
        }
        if let Some(n) = o.drops {
            self.params.n_drops = n;
        }
        if let Some(n) = o.slots {
            self.params.slots_per_drop = n;
        }
        self.ratecdf |= o.ratecdf;
        self.sync_params();
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let axes = [
            ("policy", self.policies.len()),
            ("deployment", self.deployments.len()),
            ("max_groups", self.groups.len()),
            ("gamma", self.gammas.len()),
            ("n_small_cells", self.small_cells.len()),
        ];
        for (field, len) in axes {
            if len == 0 {
                return Err(field_err(field, "sweep list is empty"));
            }
        }
        if let Some(g) = self.groups.iter().find(|&&g| g == 0) {
            return Err(field_err("max_groups", format!("must be at least 1, got {g}")));
        }
        if let Some(g) = self.gammas.iter().find(|g| g.is_nan() || **g < 0.0) {
            return Err(field_err("gamma", format!("must be nonnegative, got {g}")));
        }
        if self.params.n_drops == 0 {
            return Err(field_err("n_drops", "must be positive"));
        }
        for &nf in &self.small_cells {
            SimParams {
                n_small_cells: nf,
                ..self.params.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration (output directory excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Flat TOML that [`parse_config`] reads back to the same config.
    pub fn to_toml(&self) -> String {
        let mut t = Table::try_from(&self.params).expect("params serialize");
        let list = |xs: Vec<Value>| Value::Array(xs);
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        t.insert("out".into(), Value::String(self.out.display().to_string()));
        t.insert("ratecdf".into(), Value::Boolean(self.ratecdf));
        t.insert(
            "policy".into(),
            list(self.policies.iter().map(|p| Value::String(p.to_string())).collect()),
        );
        t.insert(
            "deployment".into(),
            list(self.deployments.iter().map(|d| Value::String(d.to_string())).collect()),
        );
        t.insert(
            "max_groups".into(),
            list(self.groups.iter().map(|&g| Value::Integer(g as i64)).collect()),
        );
        t.insert(
            "gamma".into(),
            list(self.gammas.iter().map(|&g| Value::Float(g)).collect()),
        );
        t.insert(
            "n_small_cells".into(),
            list(self.small_cells.iter().map(|&n| Value::Integer(n as i64)).collect()),
        );
        toml::to_string(&t).expect("config serializes")
    }
}

/// Parses `A:B` into the inclusive range `A..=B`.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected A:B, got `{s}`"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
    if a > b {
        return Err(format!("empty range {a}:{b}"));
    }
    Ok((a..=b).collect())
}
