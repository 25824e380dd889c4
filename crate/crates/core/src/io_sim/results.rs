//! Writing and reading fit outputs.
//!
//! Tables are CSV with every real printed to 17 significant digits. Fit
//! metadata is a TOML document and the full fit state is JSON; both carry a
//! `format_version`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{FitResult, HyperMarginal, ParamSummary, SampleBatch};

pub const FORMAT_VERSION: u32 = 1;
/// Header prefix marking hyperparameter columns in sample tables.
pub const THETA_PREFIX: &str = "theta:";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), real)
}

fn parse_real(s: &str, row: usize, column: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::ParseCell {
        row,
        column: column.to_owned(),
        value: s.to_owned(),
        reason: e.to_string(),
    })
}

fn parse_opt(s: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if s == "NA" {
        Ok(None)
    } else {
        parse_real(s, row, column).map(Some)
    }
}

pub const SUMMARY_COLUMNS: [&str; 6] = ["name", "mean", "sd", "q2.5", "q50", "q97.5"];

pub fn write_summaries_csv<W: Write>(out: W, rows: &[ParamSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([r.name.clone(), real(r.mean), opt(r.sd), opt(r.q025), opt(r.q50), opt(r.q975)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summaries_csv<R: Read>(input: R) -> Result<Vec<ParamSummary>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != SUMMARY_COLUMNS {
        return Err(Error::MissingColumn(format!("summary header {header:?}")));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let row = i + 1;
            if rec.len() != SUMMARY_COLUMNS.len() {
                return Err(Error::RowLength {
                    row,
                    got: rec.len(),
                    expected: SUMMARY_COLUMNS.len(),
                });
            }
            Ok(ParamSummary {
                name: rec[0].to_owned(),
                mean: parse_real(&rec[1], row, "mean")?,
                sd: parse_opt(&rec[2], row, "sd")?,
                q025: parse_opt(&rec[3], row, "q2.5")?,
                q50: parse_opt(&rec[4], row, "q50")?,
                q975: parse_opt(&rec[5], row, "q97.5")?,
            })
        })
        .collect()
}

/// Latent columns, then hyperparameter columns, then `node_choice`.
pub fn write_samples_csv<W: Write>(
    out: W,
    batch: &SampleBatch,
    latent_names: &[String],
    hyper_names: &[String],
) -> Result<()> {
    let m = batch.draws.first().map_or(latent_names.len(), DVector::len);
    let s = batch.theta.first().map_or(hyper_names.len(), DVector::len);
    if m != latent_names.len() || s != hyper_names.len() {
        return Err(Error::Dimension(format!(
            "draws have {m} latent and {s} hyper coordinates, names have {} and {}",
            latent_names.len(),
            hyper_names.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let header = latent_names
        .iter()
        .cloned()
        .chain(hyper_names.iter().map(|n| format!("{THETA_PREFIX}{n}")))
        .chain(std::iter::once("node_choice".to_owned()));
    w.write_record(header)?;
    for ((d, t), node) in batch.draws.iter().zip(&batch.theta).zip(&batch.node_choice) {
        let row = d
            .iter()
            .chain(t.iter())
            .map(|&v| real(v))
            .chain(std::iter::once(node.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// A sample table read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub latent_names: Vec<String>,
    pub hyper_names: Vec<String>,
    pub batch: SampleBatch,
}

pub fn read_samples_csv<R: Read>(input: R, seed: u64) -> Result<SampleTable> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.last().map(String::as_str) != Some("node_choice") {
        return Err(Error::MissingColumn("node_choice".into()));
    }
    let names = &header[..header.len() - 1];
    let m = names.iter().take_while(|n| !n.starts_with(THETA_PREFIX)).count();
    let latent_names = names[..m].to_vec();
    let hyper_names: Vec<String> = names[m..]
        .iter()
        .map(|n| n.strip_prefix(THETA_PREFIX).map(str::to_owned))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Serialization("latent column after a hyperparameter column".into()))?;
    let s = hyper_names.len();
    let mut batch = SampleBatch {
        seed,
        draws: Vec::new(),
        node_choice: Vec::new(),
        theta: Vec::new(),
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(Error::RowLength {
                row,
                got: rec.len(),
                expected: header.len(),
            });
        }
        let vals = (0..m + s)
            .map(|c| parse_real(&rec[c], row, &header[c]))
            .collect::<Result<Vec<_>>>()?;
        batch.draws.push(DVector::from_column_slice(&vals[..m]));
        batch.theta.push(DVector::from_column_slice(&vals[m..]));
        let node = rec[m + s].parse::<usize>().map_err(|e| Error::ParseCell {
            row,
            column: "node_choice".into(),
            value: rec[m + s].to_owned(),
            reason: e.to_string(),
        })?;
        batch.node_choice.push(node);
    }
    Ok(SampleTable {
        latent_names,
        hyper_names,
        batch,
    })
}

/// Grid nodes with their log values and weights.
pub fn write_grid_csv<W: Write>(out: W, fit: &FitResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header = fit
        .hyper_names
        .iter()
        .cloned()
        .chain(["log_value".to_owned(), "lambda".to_owned()]);
    w.write_record(header)?;
    for ((node, lv), lam) in fit.grid.nodes.iter().zip(&fit.grid.log_values).zip(&fit.grid.lambda) {
        w.write_record(node.iter().chain([lv, lam]).map(|&v| real(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// One hyperparameter's marginal density and distribution function.
pub fn write_marginal_csv<W: Write>(out: W, marginal: &HyperMarginal) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "density", "cdf"])?;
    for ((x, d), c) in marginal.xs.iter().zip(&marginal.density).zip(&marginal.cdf) {
        w.write_record([real(*x), real(*d), real(*c)])?;
    }
    w.flush()?;
    Ok(())
}

/// The human-readable record of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub format_version: u32,
    pub elgm_version: String,
    pub model: String,
    pub seed: Option<u64>,
    pub fit: FitSection,
    pub hyper: HyperSection,
    pub timings: TimingSection,
    /// The run configuration, echoed as given.
    pub config: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    pub k: usize,
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub max_iter: usize,
    pub log_evidence: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub outer_grad_norm: f64,
    pub outer_effective_tol: f64,
    pub latent_dim: usize,
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSection {
    pub names: Vec<String>,
    pub theta_hat: Vec<f64>,
    /// Rows of the negative Hessian of the log marginal at `theta_hat`.
    pub hessian: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    pub outer_seconds: f64,
    pub grid_seconds: f64,
}

impl FitMetadata {
    pub fn new(fit: &FitResult, model: &str, seed: Option<u64>, config: toml::Table) -> Self {
        let h = &fit.outer_hessian;
        Self {
            format_version: FORMAT_VERSION,
            elgm_version: env!("CARGO_PKG_VERSION").to_owned(),
            model: model.to_owned(),
            seed,
            fit: FitSection {
                k: fit.config.k,
                tol_inner: fit.config.tol_inner,
                tol_outer: fit.config.tol_outer,
                max_iter: fit.config.max_iter,
                log_evidence: fit.log_evidence,
                converged: fit.outer.converged,
                outer_iterations: fit.outer.iterations,
                outer_grad_norm: fit.outer.grad_norm,
                outer_effective_tol: fit.outer.effective_tol,
                latent_dim: fit.latent_dim(),
                grid_points: fit.grid.len(),
            },
            hyper: HyperSection {
                names: fit.hyper_names.clone(),
                theta_hat: fit.theta_hat.iter().copied().collect(),
                hessian: (0..h.nrows()).map(|i| h.row(i).iter().copied().collect()).collect(),
            },
            timings: TimingSection {
                outer_seconds: fit.timings.outer_seconds,
                grid_seconds: fit.timings.grid_seconds,
            },
            config,
        }
    }
}

pub fn write_metadata(path: &Path, meta: &FitMetadata) -> Result<()> {
    let text = toml::to_string_pretty(meta).map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<FitMetadata> {
    let text = std::fs::read_to_string(path)?;
    let meta: FitMetadata = toml::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
    check_version(meta.format_version)?;
    Ok(meta)
}

/// Everything needed to draw from a fit later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitState {
    pub format_version: u32,
    pub model: String,
    pub fit: FitResult,
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Serialization(format!(
            "format version {v}, this build reads {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

pub fn write_fit_state(path: &Path, model: &str, fit: &FitResult) -> Result<()> {
    let state = FitState {
        format_version: FORMAT_VERSION,
        model: model.to_owned(),
        fit: fit.clone(),
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &state).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn read_fit_state(path: &Path) -> Result<FitState> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let state: FitState = serde_json::from_reader(file).map_err(|e| Error::Serialization(e.to_string()))?;
    check_version(state.format_version)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{fit, hyper_summaries, sample_posterior, FitConfig};
    use crate::model::gaussian_scale;

    fn scale_fit() -> FitResult {
        fit(&gaussian_scale(&[0.4, -1.2, 0.8, 2.0]).unwrap(), &FitConfig { k: 3, ..Default::default() }).unwrap()
    }

    #[test]
    fn summary_csv_schema_and_round_trip() {
        let f = scale_fit();
        let rows: Vec<ParamSummary> = hyper_summaries(&f).unwrap().into_iter().map(|h| h.natural).collect();
        let mut buf = Vec::new();
        write_summaries_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("name,mean,sd,q2.5,q50,q97.5\n"));
        assert_eq!(read_summaries_csv(buf.as_slice()).unwrap(), rows);
        let missing = vec![ParamSummary { name: "a".into(), mean: 1.0, sd: None, q025: None, q50: None, q975: None }];
        let mut buf = Vec::new();
        write_summaries_csv(&mut buf, &missing).unwrap();
        assert_eq!(read_summaries_csv(buf.as_slice()).unwrap(), missing);
    }

    #[test]
    fn sample_csv_shape_and_round_trip() {
        let batch = SampleBatch {
            seed: 4,
            draws: vec![
                DVector::from_vec(vec![0.1, 1.0 / 3.0]),
                DVector::from_vec(vec![-2.0, 1e-310]),
                DVector::from_vec(vec![7.5, -0.0]),
            ],
            node_choice: vec![0, 2, 1],
            theta: vec![DVector::zeros(0); 3],
        };
        let names = vec!["a".to_owned(), "b".to_owned()];
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &batch, &names, &[]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "a,b,node_choice");
        assert_eq!(lines[1].split(',').count(), 3);
        let back = read_samples_csv(buf.as_slice(), 4).unwrap();
        assert_eq!(back.batch, batch);
        assert_eq!(back.latent_names, names);
    }

    #[test]
    fn samples_with_hyperparameters() {
        let f = scale_fit();
        let batch = sample_posterior(&f, 5, 2).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &batch, &f.latent_names, &f.hyper_names).unwrap();
        let back = read_samples_csv(buf.as_slice(), 2).unwrap();
        assert_eq!(back.hyper_names, f.hyper_names);
        assert_eq!(back.batch, batch);
    }

    #[test]
    fn metadata_and_state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = scale_fit();
        let mut cfg = toml::Table::new();
        cfg.insert("fit.k".into(), toml::Value::Integer(3));
        let meta = FitMetadata::new(&f, "gaussian-scale", Some(7), cfg);
        let path = dir.path().join("fit.toml");
        write_metadata(&path, &meta).unwrap();
        let back = read_metadata(&path).unwrap();
        assert_eq!(back, meta);
        assert_eq!(back.hyper.theta_hat[0].to_bits(), f.theta_hat[0].to_bits());

        let path = dir.path().join("fit_state.json");
        write_fit_state(&path, "gaussian-scale", &f).unwrap();
        let state = read_fit_state(&path).unwrap();
        assert_eq!(state.fit, f);
        assert_eq!(sample_posterior(&state.fit, 50, 1).unwrap(), sample_posterior(&f, 50, 1).unwrap());
    }

    #[test]
    fn grid_and_marginal_tables() {
        let f = scale_fit();
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &f).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        let m = crate::inference::HyperDensity::new(&f).unwrap().marginal(0).unwrap();
        let mut buf = Vec::new();
        write_marginal_csv(&mut buf, &m).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,density,cdf\n"));
    }
}
