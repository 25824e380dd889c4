//! Run configuration: a TOML file with flat dotted keys, overridden by flags.
//!
//! Recognised keys:
//!
//! | key | type | default |
//! |---|---|---|
//! | `model.name` | string | required by most commands |
//! | `model.frailty` | bool | inferred from the data |
//! | `model.intercept` | bool | inferred from the data |
//! | `model.beta_variance` | float | 1000 |
//! | `data.path` | string | |
//! | `simulate.spec` | string | |
//! | `simulate.n` | integer | |
//! | `fit.k` | integer | 3 |
//! | `fit.tol_inner` | float | 1e-8 |
//! | `fit.tol_outer` | float | 1e-6 |
//! | `fit.max_iter` | integer | 200 |
//! | `sample.B` | integer | 1000 |
//! | `input.fit` | string | |
//! | `run.seed` | integer | 1 |
//! | `run.threads` | integer | 0 (all cores) |
//! | `output.dir` | string | `elgm-out` |
//! | `output.format` | `csv` or `json` | `csv` |
//! | `validate.ks_max` | float | 0.05 |
//! | `validate.points` | integer | 4000000 |
//! | `bench.n` | integer array | `[1000, 10000]` |
//! | `bench.reps` | integer | 3 |
//!
//! Keys under `manifest.` are ignored, so a run manifest can be fed back as
//! a config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use elgm::inference::FitConfig;
use toml::Value;

use crate::error::{CliError, CliResult};

/// Dotted key to value.
pub type FlatConfig = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Conjugate,
    GaussianScale,
    BernoulliGlmm,
    CoxPh,
    PoissonAggregate,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Conjugate,
        ModelKind::GaussianScale,
        ModelKind::BernoulliGlmm,
        ModelKind::CoxPh,
        ModelKind::PoissonAggregate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Conjugate => "conjugate",
            ModelKind::GaussianScale => "gaussian-scale",
            ModelKind::BernoulliGlmm => "bernoulli-glmm",
            ModelKind::CoxPh => "cox-ph",
            ModelKind::PoissonAggregate => "poisson-aggregate",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|m| m.as_str()).collect();
            format!("unknown model `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<ModelKind>,
    pub frailty: Option<bool>,
    pub intercept: Option<bool>,
    pub beta_variance: f64,
    pub data: Option<PathBuf>,
    pub simulate: Option<String>,
    /// Overrides the sample size in the simulation spec.
    pub sim_n: Option<usize>,
    pub fit: FitConfig,
    pub samples: usize,
    pub input_fit: Option<PathBuf>,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub ks_max: f64,
    pub oracle_points: usize,
    pub bench_n: Vec<usize>,
    pub bench_reps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            frailty: None,
            intercept: None,
            beta_variance: 1000.0,
            data: None,
            simulate: None,
            sim_n: None,
            fit: FitConfig::default(),
            samples: 1000,
            input_fit: None,
            seed: 1,
            threads: 0,
            out: PathBuf::from("elgm-out"),
            format: OutputFormat::Csv,
            ks_max: 0.05,
            oracle_points: 4_000_000,
            bench_n: vec![1000, 10_000],
            bench_reps: 3,
        }
    }
}

/// Nested TOML tables to dotted keys. Arrays are kept as values.
pub fn flatten(table: &toml::Table) -> FlatConfig {
    fn walk(prefix: &str, table: &toml::Table, out: &mut FlatConfig) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(t) => walk(&key, t, out),
                other => {
                    out.insert(key, other.clone());
                }
            }
        }
    }
    let mut out = FlatConfig::new();
    walk("", table, &mut out);
    out
}

/// Dotted keys back to nested tables.
pub fn nest(flat: &FlatConfig) -> toml::Table {
    let mut root = toml::Table::new();
    for (key, v) in flat {
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().unwrap_or_default();
        let mut table = &mut root;
        for p in parts {
            table = table
                .entry(p)
                .or_insert_with(|| Value::Table(toml::Table::new()))
                .as_table_mut()
                .expect("dotted keys never collide with values");
        }
        table.insert(last.to_owned(), v.clone());
    }
    root
}

/// One `key = value` line per entry, in key order.
pub fn render_flat(flat: &FlatConfig) -> String {
    flat.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn parse_config_text(text: &str) -> CliResult<FlatConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(vec![e.to_string().trim().replace('\n', " ")]))?;
    Ok(flatten(&table))
}

pub fn read_config_file(path: &Path) -> CliResult<FlatConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_text(&text)
}

/// File values, then flag overrides, resolved against the defaults.
pub fn load(path: Option<&Path>, overrides: FlatConfig) -> CliResult<RunConfig> {
    let mut flat = match path {
        Some(p) => read_config_file(p)?,
        None => FlatConfig::new(),
    };
    flat.extend(overrides);
    RunConfig::from_flat(&flat)
}

fn int(key: &str, v: &Value) -> Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => usize::try_from(*i).map_err(|e| format!("{key}: {e}")),
        _ => Err(format!("{key}: expected a nonnegative integer, got {v}")),
    }
}

fn float(key: &str, v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(format!("{key}: expected a number, got {v}")),
    }
}

fn string(key: &str, v: &Value) -> Result<String, String> {
    v.as_str().map(str::to_owned).ok_or_else(|| format!("{key}: expected a string, got {v}"))
}

fn boolean(key: &str, v: &Value) -> Result<bool, String> {
    v.as_bool().ok_or_else(|| format!("{key}: expected true or false, got {v}"))
}

fn int_list(key: &str, v: &Value) -> Result<Vec<usize>, String> {
    let items = v.as_array().ok_or_else(|| format!("{key}: expected an array of integers, got {v}"))?;
    items.iter().map(|x| int(key, x)).collect()
}

fn parsed<T: FromStr<Err = String>>(key: &str, v: &Value) -> Result<T, String> {
    string(key, v)?.parse().map_err(|e| format!("{key}: {e}"))
}

impl RunConfig {
    /// Resolves every key, collecting one message per offending key.
    pub fn from_flat(flat: &FlatConfig) -> CliResult<Self> {
        let mut c = RunConfig::default();
        let mut errors = Vec::new();
        for (key, v) in flat {
            let r: Result<(), String> = (|| {
                match key.as_str() {
                    "model.name" => c.model = Some(parsed(key, v)?),
                    "model.frailty" => c.frailty = Some(boolean(key, v)?),
                    "model.intercept" => c.intercept = Some(boolean(key, v)?),
                    "model.beta_variance" => c.beta_variance = float(key, v)?,
                    "data.path" => c.data = Some(string(key, v)?.into()),
                    "simulate.spec" => c.simulate = Some(string(key, v)?),
                    "simulate.n" => c.sim_n = Some(int(key, v)?),
                    "fit.k" => c.fit.k = int(key, v)?,
                    "fit.tol_inner" => c.fit.tol_inner = float(key, v)?,
                    "fit.tol_outer" => c.fit.tol_outer = float(key, v)?,
                    "fit.max_iter" => c.fit.max_iter = int(key, v)?,
                    "sample.B" => c.samples = int(key, v)?,
                    "input.fit" => c.input_fit = Some(string(key, v)?.into()),
                    "run.seed" => {
                        c.seed = match v {
                            Value::Integer(i) if *i >= 0 => *i as u64,
                            _ => return Err(format!("{key}: expected a nonnegative integer, got {v}")),
                        }
                    }
                    "run.threads" => c.threads = int(key, v)?,
                    "output.dir" => c.out = string(key, v)?.into(),
                    "output.format" => c.format = parsed(key, v)?,
                    "validate.ks_max" => c.ks_max = float(key, v)?,
                    "validate.points" => c.oracle_points = int(key, v)?,
                    "bench.n" => c.bench_n = int_list(key, v)?,
                    "bench.reps" => c.bench_reps = int(key, v)?,
                    k if k.starts_with("manifest.") => {}
                    _ => return Err(format!("{key}: unknown key")),
                }
                Ok(())
            })();
            if let Err(e) = r {
                errors.push(e);
            }
        }
        let k_range = format!("must lie in 1..={}", elgm::quadrature::MAX_ORDER);
        let checks: [(&str, bool, &str); 7] = [
            ("fit.k", (1..=elgm::quadrature::MAX_ORDER).contains(&c.fit.k), &k_range),
            ("fit.tol_inner", c.fit.tol_inner > 0.0 && c.fit.tol_inner.is_finite(), "must be positive"),
            ("fit.tol_outer", c.fit.tol_outer > 0.0 && c.fit.tol_outer.is_finite(), "must be positive"),
            ("fit.max_iter", c.fit.max_iter > 0, "must be at least 1"),
            ("model.beta_variance", c.beta_variance > 0.0 && c.beta_variance.is_finite(), "must be positive"),
            ("validate.ks_max", c.ks_max > 0.0, "must be positive"),
            ("bench.reps", c.bench_reps > 0, "must be at least 1"),
        ];
        for (key, ok, msg) in checks {
            if !ok && flat.contains_key(key) {
                errors.push(format!("{key}: {msg}"));
            }
        }
        if c.data.is_some() && c.simulate.is_some() {
            errors.push("data.path: cannot be combined with simulate.spec".into());
        }
        if errors.is_empty() {
            Ok(c)
        } else {
            Err(CliError::Config(errors))
        }
    }

    /// Every resolved setting as dotted keys.
    pub fn to_flat(&self) -> FlatConfig {
        let mut f = FlatConfig::new();
        let mut put = |k: &str, v: Value| {
            f.insert(k.to_owned(), v);
        };
        let path = |p: &Path| Value::String(p.display().to_string());
        if let Some(m) = self.model {
            put("model.name", Value::String(m.as_str().into()));
        }
        if let Some(b) = self.frailty {
            put("model.frailty", Value::Boolean(b));
        }
        if let Some(b) = self.intercept {
            put("model.intercept", Value::Boolean(b));
        }
        put("model.beta_variance", Value::Float(self.beta_variance));
        if let Some(p) = &self.data {
            put("data.path", path(p));
        }
        if let Some(s) = &self.simulate {
            put("simulate.spec", Value::String(s.clone()));
        }
        if let Some(n) = self.sim_n {
            put("simulate.n", Value::Integer(n as i64));
        }
        put("fit.k", Value::Integer(self.fit.k as i64));
        put("fit.tol_inner", Value::Float(self.fit.tol_inner));
        put("fit.tol_outer", Value::Float(self.fit.tol_outer));
        put("fit.max_iter", Value::Integer(self.fit.max_iter as i64));
        put("sample.B", Value::Integer(self.samples as i64));
        if let Some(p) = &self.input_fit {
            put("input.fit", path(p));
        }
        put("run.seed", Value::Integer(self.seed as i64));
        put("run.threads", Value::Integer(self.threads as i64));
        put("output.dir", path(&self.out));
        put("output.format", Value::String(self.format.as_str().into()));
        put("validate.ks_max", Value::Float(self.ks_max));
        put("validate.points", Value::Integer(self.oracle_points as i64));
        put(
            "bench.n",
            Value::Array(self.bench_n.iter().map(|&n| Value::Integer(n as i64)).collect()),
        );
        put("bench.reps", Value::Integer(self.bench_reps as i64));
        f
    }

    pub fn require_model(&self) -> CliResult<ModelKind> {
        self.model
            .ok_or_else(|| CliError::Config(vec!["model.name: required (use --model)".into()]))
    }
}
