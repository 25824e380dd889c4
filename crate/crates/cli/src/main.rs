use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elgm::io_sim::write_summaries_csv;
use elgm_cli::{
    cmd_bench, cmd_fit, cmd_sample, cmd_simulate, cmd_summarize, cmd_validate, resolve, CliError, CliResult,
    FlatConfig, RunConfig, THREADS_ENV,
};
use toml::Value;

#[derive(Debug, Parser)]
#[command(name = "elgm", version, about = "Nested Laplace inference for extended latent Gaussian models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model and write summaries, grid, densities and samples.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Sample size for simulated data.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Draw posterior samples from a saved fit.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Saved fit: an output directory or its fit_state.json.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Recompute posterior summaries from a saved fit.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Compare the fit against a brute-force grid posterior.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        /// Largest acceptable KS distance.
        #[arg(long)]
        ks_max: Option<f64>,
        /// Grid point budget per oracle.
        #[arg(long)]
        oracle_points: Option<usize>,
    },
    /// Generate a data set with known parameters.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Time fits over a list of sample sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with flat dotted keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// CSV data file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Simulation spec, e.g. "n=4,ybar=1".
    #[arg(long)]
    simulate: Option<String>,
    /// Quadrature points per hyperparameter.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tol_inner: Option<f64>,
    #[arg(long)]
    tol_outer: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Number of posterior draws.
    #[arg(long = "B", value_name = "B")]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores [env: ELGM_THREADS].
    #[arg(long)]
    threads: Option<usize>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

fn int(v: usize) -> Value {
    Value::Integer(i64::try_from(v).unwrap_or(i64::MAX))
}

fn path(p: &std::path::Path) -> Value {
    Value::String(p.display().to_string())
}

impl Common {
    fn overrides(&self) -> FlatConfig {
        let mut f = FlatConfig::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                f.insert(k.to_owned(), v);
            }
        };
        put("model.name", self.model.clone().map(Value::String));
        put("data.path", self.data.as_deref().map(path));
        put("simulate.spec", self.simulate.clone().map(Value::String));
        put("fit.k", self.k.map(int));
        put("fit.tol_inner", self.tol_inner.map(Value::Float));
        put("fit.tol_outer", self.tol_outer.map(Value::Float));
        put("fit.max_iter", self.max_iter.map(int));
        put("sample.B", self.draws.map(int));
        put("run.seed", self.seed.map(|s| Value::Integer(i64::try_from(s).unwrap_or(-1))));
        put("run.threads", self.threads.map(int));
        put("output.dir", self.out.as_deref().map(path));
        put("output.format", self.format.clone().map(Value::String));
        f
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit { .. } => "fit",
            Command::Sample { .. } => "sample",
            Command::Summarize { .. } => "summarize",
            Command::Validate { .. } => "validate",
            Command::Simulate { .. } => "simulate",
            Command::Bench { .. } => "bench",
        }
    }

    fn config(&self) -> CliResult<RunConfig> {
        let (common, mut extra) = match self {
            Command::Fit { common, n } | Command::Simulate { common, n } => {
                (common, FlatConfig::from_iter(n.map(|n| ("simulate.n".to_owned(), int(n)))))
            }
            Command::Sample { common, fit } | Command::Summarize { common, fit } => (
                common,
                FlatConfig::from_iter(fit.as_deref().map(|p| ("input.fit".to_owned(), path(p)))),
            ),
            Command::Validate {
                common,
                n,
                ks_max,
                oracle_points,
            } => {
                let mut f = FlatConfig::new();
                if let Some(n) = n {
                    f.insert("simulate.n".into(), int(*n));
                }
                if let Some(v) = ks_max {
                    f.insert("validate.ks_max".into(), Value::Float(*v));
                }
                if let Some(v) = oracle_points {
                    f.insert("validate.points".into(), int(*v));
                }
                (common, f)
            }
            Command::Bench { common, n, reps } => {
                let mut f = FlatConfig::new();
                if !n.is_empty() {
                    f.insert("bench.n".into(), Value::Array(n.iter().map(|&v| int(v)).collect()));
                }
                if let Some(r) = reps {
                    f.insert("bench.reps".into(), int(*r));
                }
                (common, f)
            }
        };
        let mut overrides = common.overrides();
        overrides.append(&mut extra);
        let env = std::env::var(THREADS_ENV).ok();
        resolve(common.config.as_deref(), env.as_deref(), overrides)
    }
}

fn csv_summaries(rows: &[elgm::inference::ParamSummary]) -> CliResult<()> {
    let stdout = std::io::stdout();
    write_summaries_csv(stdout.lock(), rows)?;
    Ok(())
}

fn execute(command: &Command, config: &RunConfig) -> CliResult<()> {
    let out = config.out.display();
    match command {
        Command::Fit { .. } => {
            let run = cmd_fit(config)?;
            csv_summaries(&run.summaries)?;
            eprintln!(
                "log evidence {:.10}, {} grid points, outer converged {}; results in {out}",
                run.fit.log_evidence,
                run.fit.grid.len(),
                run.fit.outer.converged
            );
        }
        Command::Sample { .. } => {
            let batch = cmd_sample(config)?;
            println!("wrote {} draws to {out}/samples.csv", batch.len());
        }
        Command::Summarize { .. } => csv_summaries(&cmd_summarize(config)?)?,
        Command::Validate { .. } => {
            let r = cmd_validate(config)?;
            for c in &r.checks {
                println!(
                    "{} ks={:.5} fit_mean={:.6} oracle_mean={:.6} {}",
                    c.name,
                    c.check.ks,
                    c.check.fit_mean,
                    c.check.oracle_mean,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
            println!(
                "log_evidence={:.8} oracle={:.8} max_ks={:.5} ks_max={}",
                r.log_evidence,
                r.oracle_log_evidence,
                r.max_ks(),
                r.ks_max
            );
            r.ensure_passed()?;
        }
        Command::Simulate { .. } => {
            let truth = cmd_simulate(config)?;
            println!(
                "wrote {} rows to {out}/data.csv and parameters to {out}/truth.toml",
                truth.table.nrows()
            );
        }
        Command::Bench { .. } => {
            let rows = cmd_bench(config)?;
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{:>10} {:>5} {:>12} {:>12} {:>12}", "n", "reps", "mean_s", "sd_s", "median_s");
            for r in rows {
                let _ = writeln!(
                    stdout,
                    "{:>10} {:>5} {:>12.4} {:>12.4} {:>12.4}",
                    r.n, r.reps, r.mean, r.sd, r.median
                );
            }
        }
    }
    Ok(())
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.line());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion)
                || e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            return fail(&CliError::Usage(first.trim_start_matches("error: ").to_owned()));
        }
    };
    let config = match cli.command.config() {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    log::debug!("{} with {:?}", cli.command.name(), config);
    match elgm::par::with_threads(config.threads, || execute(&cli.command, &config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
