//! Experiment configuration: a flat TOML file.
//!
//! | key | type | default |
//! |---|---|---|
//! | `data` | path to a LibSVM file, relative to the config file | artificial data |
//! | `artificial_n`, `artificial_d` | integers | 2000, 20 |
//! | `artificial_c` | Toeplitz correlation in `[0, 1)` | 0.9 |
//! | `artificial_seed` | integer | 1 |
//! | `lambda` | number or `"1/n"` | `"1/n"` |
//! | `scale` | rescale every sample to unit norm | false |
//! | `methods` | array of method strings, see [`crate::methods`] | required unless a grid is set |
//! | `repeats` | integer ≥ 1 | 10 |
//! | `tol` | gradient-norm target | 1e-5 |
//! | `time_budget_s` | seconds per run | 60 |
//! | `max_passes` | pass budget of the first-order methods | 100 |
//! | `eval_every` | metric cadence in solver steps | per method |
//! | `output_dir` | directory, relative to the config file | `"runs"` |
//! | `seed` | base seed; repeat `r` uses `seed + r` | 0 |
//! | `grid_b` | coin probabilities or presets | none |
//! | `grid_gamma` | stepsizes | none |
//! | `grid_repeats` | integer ≥ 1 | 1 |
//! | `grid_method` | TCS method string the grid starts from | first `tcs` method |
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use snr_core::tcs::BernoulliPreset;
use thiserror::Error;
use toml::{Table, Value};

use crate::methods::{parse_b, MethodSpec, TcsParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid TOML: {0}")]
    Syntax(String),
    #[error("`{key}`: {reason}")]
    Key { key: String, reason: String },
}

impl ConfigError {
    pub fn key(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Key {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Offending key, when the error concerns one.
    pub fn key_path(&self) -> Option<&str> {
        match self {
            ConfigError::Key { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Libsvm(PathBuf),
    Artificial { n: usize, d: usize, c: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    /// `1/n`, resolved once the dataset is loaded.
    InverseN,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub b: Vec<BernoulliPreset>,
    pub gamma: Vec<f64>,
    pub repeats: usize,
    pub base: TcsParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub lambda: LambdaSpec,
    pub scale: bool,
    pub methods: Vec<MethodSpec>,
    pub repeats: usize,
    pub tol: f64,
    pub time_budget_s: Option<f64>,
    pub max_passes: f64,
    pub eval_every: Option<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub grid: Option<GridSpec>,
    /// The parsed file, kept for the manifest.
    pub raw: Table,
}

const KEYS: &[&str] = &[
    "data",
    "artificial_n",
    "artificial_d",
    "artificial_c",
    "artificial_seed",
    "lambda",
    "scale",
    "methods",
    "repeats",
    "tol",
    "time_budget_s",
    "max_passes",
    "eval_every",
    "output_dir",
    "seed",
    "grid_b",
    "grid_gamma",
    "grid_repeats",
    "grid_method",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Artificial {
                n: 2000,
                d: 20,
                c: 0.9,
                seed: 1,
            },
            lambda: LambdaSpec::InverseN,
            scale: false,
            methods: Vec::new(),
            repeats: 10,
            tol: 1e-5,
            time_budget_s: Some(60.0),
            max_passes: 100.0,
            eval_every: None,
            output_dir: PathBuf::from("runs"),
            seed: 0,
            grid: None,
            raw: Table::new(),
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(ConfigError::key(key, format!("expected a number, found {}", other.type_str()))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Integer(i) => Err(ConfigError::key(key, format!("{i} is negative"))),
        other => Err(ConfigError::key(key, format!("expected an integer, found {}", other.type_str()))),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize, ConfigError> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_positive_usize(key: &str, v: &Value) -> Result<usize, ConfigError> {
    match as_usize(key, v)? {
        0 => Err(ConfigError::key(key, "must be at least 1")),
        x => Ok(x),
    }
}

fn as_positive_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    let x = as_f64(key, v)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::key(key, format!("{x} must be positive and finite")))
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str()
        .ok_or_else(|| ConfigError::key(key, format!("expected a string, found {}", v.type_str())))
}

fn as_array<'a>(key: &str, v: &'a Value) -> Result<&'a [Value], ConfigError> {
    v.as_array()
        .map(|a| a.as_slice())
        .ok_or_else(|| ConfigError::key(key, format!("expected an array, found {}", v.type_str())))
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Parses a config; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        Self::from_table(table, base_dir)
    }

    pub fn from_table(table: Table, base_dir: &Path) -> Result<Self, ConfigError> {
        if let Some(key) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::key(key.as_str(), "unknown key"));
        }
        let mut cfg = ExperimentConfig::default();
        let get = |k: &str| table.get(k);

        if let Some(v) = get("data") {
            cfg.data = DataSource::Libsvm(base_dir.join(as_str("data", v)?));
            if let Some(k) = ["artificial_n", "artificial_d", "artificial_c", "artificial_seed"]
                .into_iter()
                .find(|k| table.contains_key(*k))
            {
                return Err(ConfigError::key(k, "conflicts with `data`"));
            }
        } else if let DataSource::Artificial { n, d, c, seed } = &mut cfg.data {
            if let Some(v) = get("artificial_n") {
                *n = as_positive_usize("artificial_n", v)?;
            }
            if let Some(v) = get("artificial_d") {
                *d = as_positive_usize("artificial_d", v)?;
            }
            if let Some(v) = get("artificial_c") {
                *c = as_f64("artificial_c", v)?;
                if !(0.0..1.0).contains(c) {
                    return Err(ConfigError::key("artificial_c", format!("{c} must lie in [0, 1)")));
                }
            }
            if let Some(v) = get("artificial_seed") {
                *seed = as_u64("artificial_seed", v)?;
            }
        }

        if let Some(v) = get("lambda") {
            cfg.lambda = parse_lambda(v)?;
        }
        if let Some(v) = get("scale") {
            cfg.scale = v
                .as_bool()
                .ok_or_else(|| ConfigError::key("scale", format!("expected a boolean, found {}", v.type_str())))?;
        }

        if let Some(methods) = get("methods") {
            for (i, m) in as_array("methods", methods)?.iter().enumerate() {
                let key = format!("methods[{i}]");
                let text = as_str(&key, m)?;
                cfg.methods
                    .push(MethodSpec::parse(text).map_err(|reason| ConfigError::key(key, reason))?);
            }
            if cfg.methods.is_empty() {
                return Err(ConfigError::key("methods", "at least one method is required"));
            }
        }

        if let Some(v) = get("repeats") {
            cfg.repeats = as_positive_usize("repeats", v)?;
        }
        if let Some(v) = get("tol") {
            cfg.tol = as_positive_f64("tol", v)?;
        }
        if let Some(v) = get("time_budget_s") {
            cfg.time_budget_s = Some(as_positive_f64("time_budget_s", v)?);
        }
        if let Some(v) = get("max_passes") {
            cfg.max_passes = as_positive_f64("max_passes", v)?;
        }
        if let Some(v) = get("eval_every") {
            cfg.eval_every = Some(as_positive_usize("eval_every", v)?);
        }
        if let Some(v) = get("output_dir") {
            cfg.output_dir = base_dir.join(as_str("output_dir", v)?);
        } else {
            cfg.output_dir = base_dir.join("runs");
        }
        if let Some(v) = get("seed") {
            cfg.seed = as_u64("seed", v)?;
        }

        cfg.grid = parse_grid(&table, &cfg.methods)?;
        if cfg.methods.is_empty() && cfg.grid.is_none() {
            return Err(ConfigError::key("methods", "missing"));
        }
        cfg.raw = table;
        Ok(cfg)
    }

    /// Snapshot of the config for the manifest.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.raw).unwrap_or(serde_json::Value::Null)
    }
}

fn parse_lambda(v: &Value) -> Result<LambdaSpec, ConfigError> {
    match v {
        Value::String(s) if s.replace(' ', "") == "1/n" => Ok(LambdaSpec::InverseN),
        Value::String(s) => Err(ConfigError::key("lambda", format!("expected a number or \"1/n\", found \"{s}\""))),
        other => Ok(LambdaSpec::Value(as_positive_f64("lambda", other)?)),
    }
}

fn parse_grid(table: &Table, methods: &[MethodSpec]) -> Result<Option<GridSpec>, ConfigError> {
    let (b, gamma) = match (table.get("grid_b"), table.get("grid_gamma")) {
        (None, None) => {
            if let Some(k) = ["grid_repeats", "grid_method"].into_iter().find(|k| table.contains_key(*k)) {
                return Err(ConfigError::key(k, "needs `grid_b` and `grid_gamma`"));
            }
            return Ok(None);
        }
        (Some(b), Some(g)) => (b, g),
        (None, Some(_)) => return Err(ConfigError::key("grid_b", "missing while `grid_gamma` is set")),
        (Some(_), None) => return Err(ConfigError::key("grid_gamma", "missing while `grid_b` is set")),
    };
    let mut bs = Vec::new();
    for (i, v) in as_array("grid_b", b)?.iter().enumerate() {
        let key = format!("grid_b[{i}]");
        let text = match v {
            Value::String(s) => s.clone(),
            other => as_f64(&key, other)?.to_string(),
        };
        bs.push(parse_b(&text).map_err(|reason| ConfigError::key(key, reason))?);
    }
    let mut gammas = Vec::new();
    for (i, v) in as_array("grid_gamma", gamma)?.iter().enumerate() {
        gammas.push(as_positive_f64(&format!("grid_gamma[{i}]"), v)?);
    }
    if bs.is_empty() {
        return Err(ConfigError::key("grid_b", "empty grid"));
    }
    if gammas.is_empty() {
        return Err(ConfigError::key("grid_gamma", "empty grid"));
    }
    let repeats = match table.get("grid_repeats") {
        Some(v) => as_positive_usize("grid_repeats", v)?,
        None => 1,
    };
    let base = match table.get("grid_method") {
        Some(v) => match MethodSpec::parse(as_str("grid_method", v)?) {
            Ok(MethodSpec::Tcs(p)) => p,
            Ok(_) => return Err(ConfigError::key("grid_method", "the grid searches TCS parameters")),
            Err(reason) => return Err(ConfigError::key("grid_method", reason)),
        },
        None => methods
            .iter()
            .find_map(|m| match m {
                MethodSpec::Tcs(p) => Some(p.clone()),
                _ => None,
            })
            .unwrap_or_default(),
    };
    Ok(Some(GridSpec {
        b: bs,
        gamma: gammas,
        repeats,
        base,
    }))
}
