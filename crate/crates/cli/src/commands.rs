//! The subcommands. Each one writes its files plus `manifest.toml` to the
//! output directory and returns what it computed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use elgm::inference::{
    fit, hyper_summaries, latent_summaries, sample_posterior, FitResult, HyperDensity, ParamSummary, SampleBatch,
};
use elgm::io_sim::{
    read_fit_state, write_fit_state, write_grid_csv, write_marginal_csv, write_metadata, write_samples_csv,
    write_summaries_csv, FitMetadata, SimTruth, FORMAT_VERSION,
};
use elgm::model::LatentModel;
use elgm::validation::{brute_force_posterior, compare_fit_to_oracle, Coord, GridSpec, MarginalCheck};
use serde::Serialize;

use crate::config::{nest, render_flat, OutputFormat, RunConfig};
use crate::dataset::{prepare, simulate};
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.toml";
pub const FIT_STATE: &str = "fit_state.json";

/// Half-width of the oracle box, in posterior standard deviations.
const ORACLE_HALF_WIDTH: f64 = 9.0;
/// Points along the inspected axis of a one-dimensional oracle.
const ORACLE_AXIS_1D: usize = 4001;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn out_dir(config: &RunConfig) -> CliResult<&Path> {
    std::fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    Ok(&config.out)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| elgm::error::Error::Serialization(e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// The resolved configuration without the output directory, so two runs
/// that differ only in where they write produce identical manifests.
pub fn manifest_text(command: &str, config: &RunConfig) -> String {
    let mut flat = config.to_flat();
    flat.remove("output.dir");
    format!(
        "manifest.command = \"{command}\"\nmanifest.elgm_version = \"{}\"\nmanifest.format_version = {FORMAT_VERSION}\n{}",
        env!("CARGO_PKG_VERSION"),
        render_flat(&flat)
    )
}

fn write_manifest(dir: &Path, command: &str, config: &RunConfig) -> CliResult<()> {
    let path = dir.join(MANIFEST);
    std::fs::write(&path, manifest_text(command, config)).map_err(|e| CliError::io(&path, e))
}

/// Latent rows, then each hyperparameter on its optimisation scale and, when
/// transformed, on its natural scale.
pub fn summary_rows(fit: &FitResult) -> CliResult<Vec<ParamSummary>> {
    let mut rows = latent_summaries(fit);
    for h in hyper_summaries(fit)? {
        let distinct = h.natural.name != h.unconstrained.name;
        rows.push(h.unconstrained);
        if distinct {
            rows.push(h.natural);
        }
    }
    Ok(rows)
}

fn write_summaries(dir: &Path, format: OutputFormat, rows: &[ParamSummary]) -> CliResult<PathBuf> {
    match format {
        OutputFormat::Csv => {
            let path = dir.join("summaries.csv");
            write_summaries_csv(create(&path)?, rows)?;
            Ok(path)
        }
        OutputFormat::Json => {
            let path = dir.join("summaries.json");
            write_json(&path, rows)?;
            Ok(path)
        }
    }
}

fn write_samples(dir: &Path, fit: &FitResult, batch: &SampleBatch) -> CliResult<()> {
    let path = dir.join("samples.csv");
    write_samples_csv(create(&path)?, batch, &fit.latent_names, &fit.hyper_names)?;
    Ok(())
}

fn fit_state_path(config: &RunConfig) -> CliResult<PathBuf> {
    let p = config
        .input_fit
        .clone()
        .ok_or_else(|| CliError::Config(vec!["input.fit: required (use --fit)".into()]))?;
    Ok(if p.is_dir() { p.join(FIT_STATE) } else { p })
}

#[derive(Debug, Clone)]
pub struct FitRun {
    pub fit: FitResult,
    pub summaries: Vec<ParamSummary>,
    pub samples: Option<SampleBatch>,
}

/// Fits the model and writes `fit.toml`, `fit_state.json`, the summaries,
/// `grid.csv`, one density file per hyperparameter and, when `sample.B > 0`,
/// `samples.csv`.
pub fn cmd_fit(config: &RunConfig) -> CliResult<FitRun> {
    let prepared = prepare(config)?;
    let result = fit(&prepared.model, &config.fit)?;
    let dir = out_dir(config)?;
    let name = prepared.kind.as_str();

    let meta = FitMetadata::new(&result, name, Some(config.seed), nest(&config.to_flat()));
    write_metadata(&dir.join("fit.toml"), &meta)?;
    write_fit_state(&dir.join(FIT_STATE), name, &result)?;
    let summaries = summary_rows(&result)?;
    write_summaries(dir, config.format, &summaries)?;
    write_grid_csv(create(&dir.join("grid.csv"))?, &result)?;
    if result.hyper_dim() > 0 && result.grid.len() > 1 {
        let density = HyperDensity::new(&result)?;
        for (j, hyper) in result.hyper_names.iter().enumerate() {
            let path = dir.join(format!("marginal_{hyper}.csv"));
            write_marginal_csv(create(&path)?, &density.marginal(j)?)?;
        }
    }
    let samples = if config.samples > 0 {
        let batch = sample_posterior(&result, config.samples, config.seed)?;
        write_samples(dir, &result, &batch)?;
        Some(batch)
    } else {
        None
    };
    write_manifest(dir, "fit", config)?;
    Ok(FitRun {
        fit: result,
        summaries,
        samples,
    })
}

/// Draws `sample.B` values from a saved fit into `samples.csv`.
pub fn cmd_sample(config: &RunConfig) -> CliResult<SampleBatch> {
    let state = read_fit_state(&fit_state_path(config)?)?;
    let batch = sample_posterior(&state.fit, config.samples, config.seed)?;
    let dir = out_dir(config)?;
    write_samples(dir, &state.fit, &batch)?;
    write_manifest(dir, "sample", config)?;
    Ok(batch)
}

/// Recomputes the summaries of a saved fit.
pub fn cmd_summarize(config: &RunConfig) -> CliResult<Vec<ParamSummary>> {
    let state = read_fit_state(&fit_state_path(config)?)?;
    let rows = summary_rows(&state.fit)?;
    let dir = out_dir(config)?;
    write_summaries(dir, config.format, &rows)?;
    write_manifest(dir, "summarize", config)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateCheck {
    pub name: String,
    #[serde(flatten)]
    pub check: MarginalCheck,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub ks_max: f64,
    pub checks: Vec<CoordinateCheck>,
    pub log_evidence: f64,
    pub oracle_log_evidence: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_ks(&self) -> f64 {
        self.checks.iter().map(|c| c.check.ks).fold(0.0, f64::max)
    }

    /// A validation error naming each coordinate above the threshold.
    pub fn ensure_passed(&self) -> CliResult<()> {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ks={:.4}", c.name, c.check.ks))
            .collect();
        if failed.is_empty() {
            return Ok(());
        }
        Err(CliError::Validation(format!("KS above {} for {}", self.ks_max, failed.join(", "))))
    }
}

/// Grid sizes for an oracle that resolves coordinate `target` finely and the
/// rest coarsely, within `budget` points.
pub fn oracle_points(dim: usize, target: usize, budget: usize) -> Vec<usize> {
    if dim == 1 {
        return vec![budget.clamp(3, ORACLE_AXIS_1D)];
    }
    let base = (budget as f64).powf(1.0 / dim as f64).floor() as usize;
    let fine = (4 * base).clamp(3, ORACLE_AXIS_1D);
    let coarse = ((budget / fine) as f64).powf(1.0 / (dim - 1) as f64).floor() as usize;
    (0..dim)
        .map(|c| if c == target { fine } else { coarse.max(3) })
        .collect()
}

/// Fits the model, builds a brute-force oracle for every coordinate and
/// compares sampled marginals by the KS distance. A failing coordinate is
/// recorded in the report, not returned as an error.
pub fn cmd_validate(config: &RunConfig) -> CliResult<ValidationReport> {
    let prepared = prepare(config)?;
    let model = &prepared.model;
    let result = fit(model, &config.fit)?;
    let (m, s) = (result.latent_dim(), result.hyper_dim());
    let dim = m + s;
    if dim == 0 {
        return Err(CliError::Usage("model has nothing to validate".into()));
    }
    let names: Vec<String> = model.latent_names().into_iter().chain(model.hyper_names()).collect();
    let mut checks = Vec::with_capacity(dim);
    let mut oracle_log_evidence = f64::NAN;
    for (c, name) in names.iter().enumerate() {
        let coord = if c < m { Coord::Latent(c) } else { Coord::Hyper(c - m) };
        let grid = GridSpec::around_fit(&result, ORACLE_HALF_WIDTH, &oracle_points(dim, c, config.oracle_points))?;
        let oracle = brute_force_posterior(model, &[coord], &grid)?;
        oracle_log_evidence = oracle.log_normalizer;
        let check = compare_fit_to_oracle(&result, &oracle, config.samples.max(2), config.seed)?[0];
        checks.push(CoordinateCheck {
            name: name.clone(),
            check,
            passed: check.ks <= config.ks_max,
        });
    }
    let report = ValidationReport {
        model: prepared.kind.as_str().to_owned(),
        ks_max: config.ks_max,
        checks,
        log_evidence: result.log_evidence,
        oracle_log_evidence,
    };
    let dir = out_dir(config)?;
    match config.format {
        OutputFormat::Csv => {
            let path = dir.join("validation.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["name", "ks", "fit_mean", "oracle_mean", "ks_max", "passed"])
                .map_err(elgm::error::Error::from)?;
            for c in &report.checks {
                w.write_record([
                    c.name.clone(),
                    format!("{:.16e}", c.check.ks),
                    format!("{:.16e}", c.check.fit_mean),
                    format!("{:.16e}", c.check.oracle_mean),
                    format!("{:.16e}", report.ks_max),
                    c.passed.to_string(),
                ])
                .map_err(elgm::error::Error::from)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
        OutputFormat::Json => write_json(&dir.join("validation.json"), &report)?,
    }
    write_manifest(dir, "validate", config)?;
    Ok(report)
}

/// Writes `data.csv` and `truth.toml` for the configured simulator.
pub fn cmd_simulate(config: &RunConfig) -> CliResult<SimTruth> {
    let kind = config.require_model()?;
    if config.data.is_some() {
        return Err(CliError::Usage("simulate does not read data; drop --data".into()));
    }
    let truth = simulate(kind, config.simulate.as_deref().unwrap_or(""), config.sim_n, config.seed)?;
    let dir = out_dir(config)?;
    truth.table.write_csv(&dir.join("data.csv"))?;
    let text = toml::to_string_pretty(&truth.record()).map_err(|e| elgm::error::Error::Serialization(e.to_string()))?;
    let path = dir.join("truth.toml");
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    write_manifest(dir, "simulate", config)?;
    Ok(truth)
}

/// Fit times in seconds for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub reps: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl BenchRow {
    fn from_times(n: usize, mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        let r = times.len();
        let mean = times.iter().sum::<f64>() / r as f64;
        let sd = if r > 1 {
            (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (r - 1) as f64).sqrt()
        } else {
            0.0
        };
        let median = if r % 2 == 1 {
            times[r / 2]
        } else {
            0.5 * (times[r / 2 - 1] + times[r / 2])
        };
        Self {
            n,
            reps: r,
            mean,
            sd,
            median,
            min: times[0],
            max: times[r - 1],
        }
    }
}

/// Times `bench.reps` fits on fresh simulated data at each `bench.n`.
/// Repetition `r` uses seed `run.seed + r`; data generation is not timed.
pub fn cmd_bench(config: &RunConfig) -> CliResult<Vec<BenchRow>> {
    if config.data.is_some() {
        return Err(CliError::Usage("bench simulates its own data; drop --data".into()));
    }
    if config.bench_n.is_empty() {
        return Err(CliError::Config(vec!["bench.n: needs at least one sample size".into()]));
    }
    let mut rows = Vec::with_capacity(config.bench_n.len());
    for &n in &config.bench_n {
        let mut times = Vec::with_capacity(config.bench_reps);
        for r in 0..config.bench_reps {
            let run = RunConfig {
                sim_n: Some(n),
                seed: config.seed.wrapping_add(r as u64),
                ..config.clone()
            };
            let prepared = prepare(&run)?;
            let start = Instant::now();
            let result = fit(&prepared.model, &run.fit)?;
            times.push(start.elapsed().as_secs_f64());
            log::info!(
                "bench n={n} rep={r}: {:.3}s, outer converged {}",
                times[r],
                result.outer.converged
            );
        }
        rows.push(BenchRow::from_times(n, times));
    }
    let dir = out_dir(config)?;
    match config.format {
        OutputFormat::Csv => {
            let path = dir.join("bench.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            for row in &rows {
                w.serialize(row).map_err(elgm::error::Error::from)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
        OutputFormat::Json => write_json(&dir.join("bench.json"), &rows)?,
    }
    write_manifest(dir, "bench", config)?;
    Ok(rows)
}
