//! Configuration-driven experiment runner behind the `rlmc` binary.
//!
//! Every run resolves a single JSON configuration (flags override fields), writes the
//! resolved document to `config.json`, emits CSV/JSON results and lists every file in
//! `manifest.json`. Failures exit nonzero and print a JSON error record on stderr.

mod commands;
pub mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::RlmcError;

pub use config::{ExperimentConfig, IterationSettings, MeasureConfig, Overrides, ResolvedConfig, SolverChoice};
pub use output::{Manifest, ManifestEntry};

#[derive(Debug, Parser)]
#[command(name = "rlmc", version, about = "Regress-later Monte Carlo solvers for stochastic control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit coefficient matrices with the configured solver(s).
    Solve,
    /// Evaluate the policy of a stored coefficient matrix.
    Evaluate,
    /// Linear-quadratic error curve against the Riccati reference.
    BenchLq,
    /// Value versus performance iteration on the doorways problem.
    BenchDoorways,
    /// Projection error and density-ratio bound across training-measure widths.
    MeasureTradeoff,
    /// Gram conditioning, projection error and density-ratio bound of a basis/measure pair.
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Evaluate => "evaluate",
            Command::BenchLq => "bench-lq",
            Command::BenchDoorways => "bench-doorways",
            Command::MeasureTradeoff => "measure-tradeoff",
            Command::Diagnose => "diagnose",
        }
    }
}

/// Machine-readable failure description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub kind: &'static str,
    pub message: String,
    /// Every violated configuration field.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub module: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

/// Failure of a CLI run.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Run(#[from] RlmcError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 2,
            CliError::Run(RlmcError::Numerical { .. } | RlmcError::Data { .. } | RlmcError::Conditioning { .. }) => 3,
            CliError::Run(RlmcError::Io(_)) => 4,
            CliError::Run(_) => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let mut r = ErrorRecord {
            status: "error",
            kind: "",
            message: self.to_string(),
            violations: Vec::new(),
            module: None,
            n: None,
            m: None,
        };
        r.kind = match self {
            CliError::Usage(_) => "usage",
            CliError::Invalid(v) => {
                r.violations = v.clone();
                "configuration"
            }
            CliError::Run(e) => match e {
                RlmcError::Argument(_) => "argument",
                RlmcError::Construction(_) => "construction",
                RlmcError::Conditioning { .. } => "conditioning",
                RlmcError::Configuration(_) => "configuration",
                RlmcError::Capability(_) => "capability",
                RlmcError::Data { index, .. } => {
                    r.m = Some(*index);
                    "data"
                }
                RlmcError::Numerical { module, n, m, .. } => {
                    r.module = Some(module);
                    r.n = *n;
                    r.m = *m;
                    "numerical"
                }
                RlmcError::Io(_) => "io",
            },
        };
        r
    }
}

/// Load, resolve and run; returns the output directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let base = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(vec![format!("config: cannot read {}: {e}", path.display())]))?;
            ExperimentConfig::from_json(&text).map_err(|e| CliError::Invalid(vec![e]))?
        }
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
    };
    let resolved = base.resolve(cli.command, &overrides).map_err(CliError::Invalid)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = resolved.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Run(RlmcError::Configuration(format!("threads: {e}"))))?;
    pool.install(|| commands::execute(cli.command, &resolved))?;
    Ok(resolved.out)
}

/// Entry point of the binary: parse `args`, run, report. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            return report(&CliError::Usage(e.to_string().trim().trim_start_matches("error: ").to_string()), None);
        }
    };
    match run(&cli) {
        Ok(out) => {
            println!("{}", serde_json::json!({ "status": "ok", "out": out }));
            0
        }
        Err(e) => report(&e, cli.out.as_deref()),
    }
}

fn report(error: &CliError, out: Option<&std::path::Path>) -> i32 {
    let record = error.record();
    let text = serde_json::to_string_pretty(&record).unwrap_or_else(|_| format!("{{\"status\":\"error\",\"message\":{:?}}}", error.to_string()));
    eprintln!("{text}");
    if let Some(dir) = out {
        if dir.is_dir() {
            let _ = std::fs::write(dir.join("error.json"), format!("{text}\n"));
        }
    }
    error.exit_code()
}
