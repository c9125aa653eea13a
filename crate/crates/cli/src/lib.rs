//! Batch experiments over the `gmc-core` toolkit.
//!
//! Every command reads one JSON [`config::ExperimentConfig`], writes CSV and
//! JSON results into the configured output directory together with the
//! resolved config and a manifest, and reports a pass/fail verdict.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Resource(_) => EXIT_RESOURCE,
            CliError::Run(_) => EXIT_FAIL,
        }
    }
}

impl From<gmc_core::Error> for CliError {
    fn from(e: gmc_core::Error) -> Self {
        use gmc_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Domain(_) | E::Regime(_) | E::Unsupported(_) | E::Normalization(_) | E::EmptySet(_) | E::Descriptor(_) => CliError::Config(msg),
            E::Resource(_) | E::Io(_) => CliError::Resource(msg),
            _ => CliError::Run(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Resource(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gmc", version, about = "Log-correlated field and chaos-tail experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON experiment config.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override a config entry, e.g. `--set grid.hi.0=0.5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate a kernel on grid pairs and the S_d correction.
    KernelTable(CommonArgs),
    /// Draw field replicas on a grid (CSV and GMCF).
    SampleField(CommonArgs),
    /// Chaos masses, empirical tails and power-law fits over an ε ladder.
    TailScan(CommonArgs),
    /// Laplace functionals of chaos masses.
    LaplaceScan(CommonArgs),
    /// Both sides of the Brownian toy identity and its small-λ limit.
    FusionCheck(CommonArgs),
    /// The oscillating-tail law whose Laplace transform hides the oscillation.
    TauberianDemo(CommonArgs),
    /// Time reversal, path decomposition and change-of-measure checks.
    BesselCheck(CommonArgs),
    /// Critical tail fits for several kernels on one set.
    Universality(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::KernelTable(_) => "kernel-table",
            Command::SampleField(_) => "sample-field",
            Command::TailScan(_) => "tail-scan",
            Command::LaplaceScan(_) => "laplace-scan",
            Command::FusionCheck(_) => "fusion-check",
            Command::TauberianDemo(_) => "tauberian-demo",
            Command::BesselCheck(_) => "bessel-check",
            Command::Universality(_) => "universality",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::KernelTable(a)
            | Command::SampleField(a)
            | Command::TailScan(a)
            | Command::LaplaceScan(a)
            | Command::FusionCheck(a)
            | Command::TauberianDemo(a)
            | Command::BesselCheck(a)
            | Command::Universality(a) => a,
        }
    }
}

/// Run one command: resolve its config, write its outputs and return the verdict.
pub fn execute(cmd: &Command) -> Result<commands::Verdict, CliError> {
    let args = cmd.args();
    let cfg = config::load(&args.config, &args.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Resource(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let mut out = output::Output::create(&cfg.output_dir)?;
    out.write_json("config.json", &cfg)?;
    let verdict = pool.install(|| commands::dispatch(cmd, &cfg, &mut out))?;
    out.write_json("summary.json", &verdict)?;
    out.finish(cmd.name(), &cfg)?;
    Ok(verdict)
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(v) => {
            for c in &v.checks {
                println!("{:<40} {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
            }
            println!("verdict: {}", if v.passed { "PASS" } else { "FAIL" });
            if v.passed {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("gmc {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
