//! Turning a run configuration into data and a model.
//!
//! Simulation specs are comma-separated `key=value` pairs; vectors use `;`
//! as separator, for example `n=5000,beta=0;0.5,sigma1=0.5`. Keys and
//! defaults per model:
//!
//! - `conjugate`: `n=4`, `ybar=1`
//! - `gaussian-scale`: `n=200`, `sigma=1`
//! - `bernoulli-glmm`: `n=1000`, `d1=10`, `d2=30`, `beta=0;0.5`, `sigma1=0.5`, `sigma2=0.8`
//! - `cox-ph`: `n=100`, `beta=0.5;-0.5`, `frailty_sd=0`, `d=0`, `censoring=0.2`
//! - `poisson-aggregate`: `n=30` (regions), `cells=2`, `n_cells=3`, `beta=` (none), `sigma=1`

use std::collections::BTreeMap;
use std::path::Path;

use elgm::io_sim::{
    constant_response, cox_data, cox_schema, gaussian_response, gaussian_schema, glmm_data, glmm_schema,
    poisson_data, poisson_schema, read_csv, simulate_bernoulli_glmm, simulate_cox, simulate_gaussian_scale,
    simulate_poisson_aggregate, ColumnTable, SimTruth,
};
use elgm::model::{
    bernoulli_glmm, conjugate_gaussian, cox_ph_partial, gaussian_scale, poisson_aggregate, ElgmModel,
    PriorSettings,
};

use crate::config::{ModelKind, RunConfig};
use crate::error::{CliError, CliResult};

/// Parsed `key=value` pairs; lookups record which keys were used.
#[derive(Debug, Clone, Default)]
pub struct SimSpec {
    pairs: BTreeMap<String, String>,
    errors: Vec<String>,
}

impl SimSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut pairs = BTreeMap::new();
        let mut errors = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    if pairs.insert(k.trim().to_owned(), v.trim().to_owned()).is_some() {
                        errors.push(format!("simulate.spec: `{}` given twice", k.trim()));
                    }
                }
                _ => errors.push(format!("simulate.spec: `{item}` is not key=value")),
            }
        }
        if errors.is_empty() {
            Ok(Self { pairs, errors })
        } else {
            Err(CliError::Config(errors))
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.pairs.insert(key.to_owned(), value.to_string());
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.pairs.remove(key)
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        match self.take(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.errors.push(format!("simulate.spec: {key}=`{v}` is not a valid number"));
                default
            }),
        }
    }

    fn vec(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        match self.take(key) {
            None => default.to_vec(),
            Some(v) => v
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().unwrap_or_else(|_| {
                        self.errors.push(format!("simulate.spec: {key} entry `{s}` is not a number"));
                        0.0
                    })
                })
                .collect(),
        }
    }

    /// Fails with every unparseable or unknown key.
    fn finish(self, model: ModelKind) -> CliResult<()> {
        let mut errors = self.errors;
        errors.extend(
            self.pairs
                .keys()
                .map(|k| format!("simulate.spec: unknown key `{k}` for {model}")),
        );
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errors))
        }
    }
}

/// Draws a data set for `model` from `spec`, with `n` overriding the spec's
/// sample size (regions for the aggregate model).
pub fn simulate(model: ModelKind, spec: &str, n: Option<usize>, seed: u64) -> CliResult<SimTruth> {
    let mut s = SimSpec::parse(spec)?;
    if let Some(n) = n {
        s.set("n", n);
    }
    let truth = match model {
        ModelKind::Conjugate => {
            let (n, ybar) = (s.num("n", 4usize), s.num("ybar", 1.0));
            s.finish(model)?;
            constant_response(n, ybar)?
        }
        ModelKind::GaussianScale => {
            let (n, sigma) = (s.num("n", 200usize), s.num("sigma", 1.0));
            s.finish(model)?;
            simulate_gaussian_scale(seed, n, sigma)?
        }
        ModelKind::BernoulliGlmm => {
            let n = s.num("n", 1000usize);
            let d1 = s.num("d1", 10usize);
            let d2 = s.num("d2", 30usize);
            let beta = s.vec("beta", &[0.0, 0.5]);
            let sigma1 = s.num("sigma1", 0.5);
            let sigma2 = s.num("sigma2", 0.8);
            s.finish(model)?;
            simulate_bernoulli_glmm(seed, n, d1, d2, &beta, sigma1, sigma2)?
        }
        ModelKind::CoxPh => {
            let n = s.num("n", 100usize);
            let beta = s.vec("beta", &[0.5, -0.5]);
            let frailty_sd = s.num("frailty_sd", 0.0);
            let d = s.num("d", 0usize);
            let censoring = s.num("censoring", 0.2);
            s.finish(model)?;
            simulate_cox(seed, n, &beta, frailty_sd, d, censoring)?
        }
        ModelKind::PoissonAggregate => {
            let regions = s.num("n", 30usize);
            let cells = s.num("cells", 2usize);
            let n_cells = s.num("n_cells", 3usize);
            let beta = s.vec("beta", &[]);
            let sigma = s.num("sigma", 1.0);
            s.finish(model)?;
            simulate_poisson_aggregate(seed, regions, cells, n_cells, &beta, sigma)?
        }
    };
    Ok(truth)
}

pub fn read_data(model: ModelKind, path: &Path) -> CliResult<ColumnTable> {
    let schema = match model {
        ModelKind::Conjugate | ModelKind::GaussianScale => gaussian_schema(),
        ModelKind::BernoulliGlmm => glmm_schema(),
        ModelKind::CoxPh => cox_schema(),
        ModelKind::PoissonAggregate => poisson_schema(),
    };
    Ok(read_csv(path, &schema)?)
}

/// Builds the model from a table. Unset options are inferred: a Cox frailty
/// when the table has a `group` column, an aggregate intercept when the
/// simulation truth has one.
pub fn build_model(
    model: ModelKind,
    table: &ColumnTable,
    config: &RunConfig,
    truth: Option<&SimTruth>,
) -> CliResult<ElgmModel> {
    let settings = PriorSettings {
        beta_variance: config.beta_variance,
    };
    let built = match model {
        ModelKind::Conjugate => conjugate_gaussian(&gaussian_response(table)?)?,
        ModelKind::GaussianScale => gaussian_scale(&gaussian_response(table)?)?,
        ModelKind::BernoulliGlmm => bernoulli_glmm(&glmm_data(table)?, settings)?,
        ModelKind::CoxPh => {
            let frailty = config.frailty.unwrap_or_else(|| table.has("group"));
            cox_ph_partial(&cox_data(table, frailty)?, settings)?
        }
        ModelKind::PoissonAggregate => {
            let intercept = config.intercept.unwrap_or_else(|| {
                truth.is_some_and(|t| t.params.get("beta").is_some_and(|b| !b.is_empty()))
            });
            poisson_aggregate(&poisson_data(table, intercept)?, settings)?
        }
    };
    Ok(built)
}

/// The data, its generating truth when simulated, and the model.
pub struct Prepared {
    pub kind: ModelKind,
    pub table: ColumnTable,
    pub truth: Option<SimTruth>,
    pub model: ElgmModel,
}

pub fn prepare(config: &RunConfig) -> CliResult<Prepared> {
    let kind = config.require_model()?;
    let (table, truth) = match (&config.data, &config.simulate) {
        (Some(path), _) => (read_data(kind, path)?, None),
        (None, spec) => {
            let t = simulate(kind, spec.as_deref().unwrap_or(""), config.sim_n, config.seed)?;
            (t.table.clone(), Some(t))
        }
    };
    let model = build_model(kind, &table, config, truth.as_ref())?;
    Ok(Prepared {
        kind,
        table,
        truth,
        model,
    })
}
