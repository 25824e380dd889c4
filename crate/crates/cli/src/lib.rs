//! Library side of the `elgm` command-line tool: configuration, data
//! preparation and the subcommands, kept out of `main` so they can be tested.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use commands::{
    cmd_bench, cmd_fit, cmd_sample, cmd_simulate, cmd_summarize, cmd_validate, manifest_text, BenchRow, FitRun,
    ValidationReport,
};
pub use config::{load, FlatConfig, ModelKind, OutputFormat, RunConfig};
pub use error::{CliError, CliResult};

/// Environment variable consulted when neither `--threads` nor `run.threads`
/// is given.
pub const THREADS_ENV: &str = "ELGM_THREADS";

/// Config file, then `ELGM_THREADS` if the file leaves `run.threads` unset,
/// then flags.
pub fn resolve(
    path: Option<&std::path::Path>,
    env_threads: Option<&str>,
    overrides: FlatConfig,
) -> CliResult<RunConfig> {
    let mut flat = match path {
        Some(p) => config::read_config_file(p)?,
        None => FlatConfig::new(),
    };
    if let Some(v) = env_threads.filter(|_| !flat.contains_key("run.threads")) {
        let n: i64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(vec![format!("{THREADS_ENV}: `{v}` is not an integer")]))?;
        flat.insert("run.threads".into(), toml::Value::Integer(n));
    }
    flat.extend(overrides);
    RunConfig::from_flat(&flat)
}
