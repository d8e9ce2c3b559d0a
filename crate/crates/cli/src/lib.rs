//! Batch front end: loads a run configuration, runs one analysis and writes
//! a JSON report plus plot-ready CSV traces.

// `!(a <= b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::Output;
use crate::config::RunConfig;
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "steklov", version, about = "Generalized gradients and optimality checks for Lipschitz functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; report.json and traces.csv are written there.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides the SEED variable and the config document.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Format printed on stdout when --out is not given.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// First- or second-order subdifferential at the configured point.
    Subdiff,
    /// Optimality report.
    Check,
    /// Calculus rule check on two functions.
    Calculus,
    /// Built-in test functions.
    CorpusList,
    /// Validate a configuration without running it.
    ValidateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Seed from the SEED variable, if set.
fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("SEED must be an unsigned integer, got '{s}'"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<(Output, Option<PathBuf>), CliError> {
    if cli.command == Command::CorpusList {
        return Ok((commands::corpus_list()?, cli.out.clone()));
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required for this command".into()))?;
    let config = RunConfig::load(path)?;
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    let resolved = config.resolve(seed)?;
    let out = cli.out.clone().or_else(|| config.output.dir.clone());
    let output = match cli.command {
        Command::Subdiff => commands::subdiff(&resolved)?,
        Command::Check => commands::check(&resolved)?,
        Command::Calculus => commands::calculus(&resolved)?,
        Command::ValidateConfig => commands::validate(&resolved)?,
        Command::CorpusList => unreachable!(),
    };
    Ok((output, out))
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let mut file = std::fs::File::create(&tmp).map_err(io)?;
    file.write_all(contents.as_bytes()).map_err(io)?;
    file.sync_all().map_err(io)?;
    drop(file);
    std::fs::rename(&tmp, path).map_err(io)
}

/// Files written into `dir`, in write order.
pub fn write_outputs(dir: &Path, output: &Output) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    let report = dir.join("report.json");
    write_atomic(&report, &report::render(&output.json))?;
    written.push(report);
    if let Some(csv) = &output.csv {
        let traces = dir.join("traces.csv");
        write_atomic(&traces, csv)?;
        written.push(traces);
    }
    Ok(written)
}

/// Runs the parsed command; returns what goes to stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    let (output, out) = pool.install(|| execute(cli))?;
    if let Some(dir) = out {
        let written = write_outputs(&dir, &output)?;
        return Ok(written.iter().map(|p| format!("{}\n", p.display())).collect());
    }
    match cli.format {
        Format::Json => Ok(report::render(&output.json)),
        Format::Csv => output
            .csv
            .ok_or_else(|| CliError::Usage("this command has no CSV output; use --format json".into())),
    }
}
