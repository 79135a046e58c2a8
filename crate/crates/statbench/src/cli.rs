//! `statbench` command line: `run`, `list`, `validate`, `show`.
//!
//! Exit codes: 0 success, 1 invalid input (usage, config, validation),
//! 2 runtime failure. A run with failed replicates still writes every file
//! and lists the failures in the manifest, then exits 2.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::catalog;
use crate::config::{ConfigError, ExperimentConfig};
use crate::experiments::Plan;
use crate::runner::{run_replicated, write_outputs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "statbench", version, about = "Replicated statistical-estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment from a config file or a canned config name.
    Run {
        config: String,
        /// Dotted-path override, e.g. `--set replicates=2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads for replicates.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (default: the config's `output`, else `out/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the canned configs.
    List,
    /// Check a config without running it.
    Validate {
        config: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print a canned config.
    Show { name: String },
}

/// Load from a path when one exists, else from the catalog.
pub fn load_config(source: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let path = Path::new(source);
    if path.exists() {
        return ExperimentConfig::load(path, overrides);
    }
    if catalog::text(source).is_some() {
        return catalog::load(source, overrides);
    }
    Err(ConfigError::Read { path: source.to_string(), source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or canned config") })
}

fn validated(source: &str, set: &[String], err: &mut dyn Write) -> Result<Plan, i32> {
    let cfg = load_config(source, set).map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_INVALID
    })?;
    Plan::validate(&cfg).map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_INVALID
    })
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::List => {
            for name in catalog::names() {
                let cfg = catalog::load(name, &[]).expect("canned configs parse");
                let _ = writeln!(out, "{name}\t{}\t{} replicates", cfg.dgp.family(), cfg.replicates);
            }
            EXIT_OK
        }
        Command::Show { name } => match catalog::text(&name) {
            Some(t) => {
                let _ = write!(out, "{t}");
                EXIT_OK
            }
            None => {
                let _ = writeln!(err, "error: {}", ConfigError::UnknownName(name));
                EXIT_INVALID
            }
        },
        Command::Validate { config, set } => match validated(&config, &set, err) {
            Ok(plan) => {
                let c = &plan.config;
                let _ = writeln!(out, "ok: {} ({}), {} replicates, estimators: {}", c.name, c.dgp.family(), c.replicates, c.labels().join(", "));
                let _ = writeln!(out, "config hash: {}", c.hash());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run { config, set, jobs, out: out_dir } => {
            let plan = match validated(&config, &set, err) {
                Ok(p) => p,
                Err(code) => return code,
            };
            if jobs == Some(0) {
                let _ = writeln!(err, "error: --jobs must be >= 1");
                return EXIT_INVALID;
            }
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let dir = out_dir
                .or_else(|| plan.config.output.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| Path::new("out").join(&plan.config.name));
            let prepared = match plan.prepare() {
                Ok(p) => p,
                Err(e) => {
                    let _ = writeln!(err, "error: preparing run: {e}");
                    return EXIT_RUNTIME;
                }
            };
            let result = match run_replicated(&prepared, jobs) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_RUNTIME;
                }
            };
            if let Err(e) = write_outputs(&prepared, &result, &dir) {
                let _ = writeln!(err, "error: writing {}: {e}", dir.display());
                return EXIT_RUNTIME;
            }
            let _ = writeln!(out, "wrote {} records to {}", result.records.len(), dir.display());
            if result.errors.is_empty() {
                EXIT_OK
            } else {
                let _ = writeln!(err, "{} estimator failures; see manifest.json", result.errors.len());
                for e in result.errors.iter().take(5) {
                    let _ = writeln!(err, "  replicate {} {}: {}", e.replicate, e.estimator, e.message);
                }
                EXIT_RUNTIME
            }
        }
    }
}

/// Parse `args` (including the program name) and run.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, out, err),
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                EXIT_INVALID
            } else {
                let _ = write!(out, "{e}");
                EXIT_OK
            }
        }
    }
}
