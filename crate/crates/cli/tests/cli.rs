//! The `elgm` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use elgm::io_sim::read_summaries_csv;

fn elgm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elgm"))
        .args(args)
        .env_remove("ELGM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = elgm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn conjugate_fit_reports_posterior_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let run = ok(&["fit", "--model", "conjugate", "--simulate", "n=4,ybar=1", "--out", p(&out)]);
    let rows = read_summaries_csv(run.stdout.as_slice()).unwrap();
    assert_eq!(rows[0].name, "w");
    assert!((rows[0].mean - 0.8).abs() < 1e-8);
    assert!((rows[0].sd.unwrap() - 0.2f64.sqrt()).abs() < 1e-8);
    for f in ["fit.toml", "fit_state.json", "summaries.csv", "grid.csv", "samples.csv", "manifest.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn validate_scale_model() {
    let dir = tempfile::tempdir().unwrap();
    let run = ok(&[
        "validate", "--model", "gaussian-scale", "--n", "200", "--k", "7", "--B", "100000", "--out",
        p(dir.path()),
    ]);
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(text.contains("pass"), "{text}");
    let csv = String::from_utf8(read(&dir.path().join("validation.csv"))).unwrap();
    let ks: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(ks <= 0.05);
}

#[test]
fn validate_failure_exits_nonzero_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = elgm(&[
        "validate", "--model", "gaussian-scale", "--n", "50", "--k", "1", "--B", "20000", "--ks-max", "1e-6",
        "--out", p(dir.path()),
    ]);
    assert_eq!(run.status.code(), Some(3));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.starts_with("elgm-error class=validation msg=\""), "{err}");
    assert!(dir.path().join("validation.csv").exists());
}

#[test]
fn bench_times_are_positive_and_grow() {
    let dir = tempfile::tempdir().unwrap();
    let run = ok(&[
        "bench", "--model", "bernoulli-glmm", "--n", "1000,10000", "--reps", "3", "--out", p(dir.path()),
    ]);
    let bytes = read(&dir.path().join("bench.csv"));
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let rows: Vec<(usize, f64, f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|&(_, mean, sd, median)| mean > 0.0 && sd >= 0.0 && median > 0.0));
    assert!(rows[1].3 >= rows[0].3, "medians {rows:?}");
    assert!(String::from_utf8_lossy(&run.stdout).contains("median_s"));
}

#[test]
fn config_errors_name_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "fit.k = \"seven\"\nfit.tolerance = 1\nsample.B = -3\n").unwrap();
    let run = elgm(&["fit", "--config", p(&cfg), "--model", "probit"]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("elgm-error class=config "));
    for key in ["fit.k", "fit.tolerance", "sample.B", "model.name"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
}

#[test]
fn usage_and_model_errors_are_single_lines() {
    let run = elgm(&["fit", "--no-such-flag"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).starts_with("elgm-error class=usage "));

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "y,state,town\n1,a,b\n2,a,c\n").unwrap();
    let run = elgm(&["fit", "--model", "bernoulli-glmm", "--data", p(&data), "--out", p(dir.path())]);
    assert_eq!(run.status.code(), Some(1));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.starts_with("elgm-error class=model "), "{err}");

    let run = elgm(&["fit", "--model", "gaussian-scale", "--data", p(&dir.path().join("missing.csv"))]);
    assert!(String::from_utf8_lossy(&run.stderr).starts_with("elgm-error class=io "));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model.name = \"gaussian-scale\"\nsimulate.spec = \"n=30\"\nfit.k = 3\nsample.B = 0\n").unwrap();
    let out = dir.path().join("o");
    ok(&["fit", "--config", p(&cfg), "--k", "5", "--out", p(&out)]);
    let manifest = String::from_utf8(read(&out.join("manifest.toml"))).unwrap();
    assert!(manifest.contains("fit.k = 5"), "{manifest}");
    assert!(!out.join("samples.csv").exists());
    // a manifest is itself a valid config
    let again = dir.path().join("again");
    ok(&["fit", "--config", p(&out.join("manifest.toml")), "--out", p(&again)]);
    assert!(read(&out.join("summaries.csv")) == read(&again.join("summaries.csv")));
}

#[test]
fn identical_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str, threads: &str| {
        vec![
            "fit".to_owned(),
            "--model".into(),
            "bernoulli-glmm".into(),
            "--simulate".into(),
            "n=1500,d1=5,d2=15".into(),
            "--B".into(),
            "2000".into(),
            "--seed".into(),
            "17".into(),
            "--threads".into(),
            threads.into(),
            "--out".into(),
            out.into(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, t) in [(&a, "1"), (&b, "1"), (&c, "3")] {
        let v = args(p(out), t);
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    }
    // fit.toml and fit_state.json carry wall-clock timings
    for f in ["manifest.toml", "summaries.csv", "samples.csv", "grid.csv"] {
        assert!(read(&a.join(f)) == read(&b.join(f)), "{f} differs between identical runs");
    }
    for f in ["summaries.csv", "samples.csv", "grid.csv"] {
        assert!(read(&a.join(f)) == read(&c.join(f)), "{f} differs across thread counts");
    }
}

#[test]
fn saved_fit_feeds_sample_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let fit_dir = dir.path().join("fit");
    ok(&[
        "fit", "--model", "cox-ph", "--simulate", "n=80", "--B", "300", "--seed", "4", "--out", p(&fit_dir),
    ]);
    let s = dir.path().join("s");
    ok(&["sample", "--fit", p(&fit_dir), "--B", "300", "--seed", "4", "--out", p(&s)]);
    assert!(read(&fit_dir.join("samples.csv")) == read(&s.join("samples.csv")));
    let m = dir.path().join("m");
    let run = ok(&["summarize", "--fit", p(&fit_dir.join("fit_state.json")), "--out", p(&m)]);
    assert!(run.stdout == read(&fit_dir.join("summaries.csv")));
    let j = dir.path().join("j");
    ok(&["summarize", "--fit", p(&fit_dir), "--format", "json", "--out", p(&j)]);
    let rows: serde_json::Value = serde_json::from_slice(&read(&j.join("summaries.json"))).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let run = elgm(&["sample", "--out", p(&m)]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn simulated_file_fits_like_inline_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&[
        "simulate", "--model", "poisson-aggregate", "--simulate", "n=20,cells=2,n_cells=6,beta=0.2", "--seed", "8",
        "--out", p(&sim),
    ]);
    let truth: toml::Table = std::fs::read_to_string(sim.join("truth.toml")).unwrap().parse().unwrap();
    assert_eq!(truth["generator"].as_str(), Some("poisson-aggregate"));
    let inline = dir.path().join("inline");
    ok(&[
        "fit", "--model", "poisson-aggregate", "--simulate", "n=20,cells=2,n_cells=6,beta=0.2", "--seed", "8",
        "--out", p(&inline),
    ]);
    let file = dir.path().join("file");
    ok(&[
        "fit", "--model", "poisson-aggregate", "--data", p(&sim.join("data.csv")), "--seed", "8", "--out", p(&file),
        "--config", p(&write(dir.path(), "intercept.toml", "model.intercept = true\n")),
    ]);
    assert!(read(&inline.join("summaries.csv")) == read(&file.join("summaries.csv")));
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn threads_env_is_a_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_elgm"))
        .args(["fit", "--model", "conjugate", "--out", p(dir.path())])
        .env("ELGM_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest = String::from_utf8(read(&dir.path().join("manifest.toml"))).unwrap();
    assert!(manifest.contains("run.threads = 2"), "{manifest}");
    let out = Command::new(env!("CARGO_BIN_EXE_elgm"))
        .args(["fit", "--model", "conjugate", "--threads", "1", "--out", p(dir.path())])
        .env("ELGM_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest = String::from_utf8(read(&dir.path().join("manifest.toml"))).unwrap();
    assert!(manifest.contains("run.threads = 1"));
}
