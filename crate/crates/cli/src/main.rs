//! `rabi-chaos`: runs the library pipelines from a JSON config and writes
//! CSV tables plus a `meta.json` sidecar.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cache;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::cache::SpectrumCache;
use crate::commands::{Context, Report};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{write_meta, Meta};

#[derive(Debug, Parser)]
#[command(name = "rabi-chaos", version, about = "Spectra, FOTOC scrambling and equilibration of spin-boson models")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration.
    #[arg(long, global = true, env = "RABI_CHAOS_CONFIG")]
    config: Option<PathBuf>,

    /// Overrides `output.directory` from the config.
    #[arg(long, global = true, env = "RABI_CHAOS_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    /// Directory for cached spectra; caching is off without it.
    #[arg(long, global = true, env = "RABI_CHAOS_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "RABI_CHAOS_THREADS")]
    threads: Option<usize>,

    /// Reserved; every pipeline is deterministic. Recorded in the metadata.
    #[arg(long, global = true, env = "RABI_CHAOS_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Eigenvalues at fixed cutoffs, optionally one sector.
    Spectrum,
    /// Unfolded nearest-neighbour spacings and their histogram.
    Spacing,
    /// FOTOC series with adaptive cutoff and Lyapunov fit.
    Fotoc,
    /// Explicit-echo FOTOC or sigma_x echo divergence.
    Echo,
    /// Lyapunov fits over `etas` and/or `couplings`.
    LyapunovScan,
    /// Diagonal-ensemble, time and microcanonical averages.
    Equilibrate,
    /// Effective dimension over occupations or couplings.
    DeffScan,
    /// Block spectra against the full dense solve.
    OracleCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Spacing => "spacing",
            Command::Fotoc => "fotoc",
            Command::Echo => "echo",
            Command::LyapunovScan => "lyapunov-scan",
            Command::Equilibrate => "equilibrate",
            Command::DeffScan => "deff-scan",
            Command::OracleCheck => "oracle-check",
        }
    }

    fn run(self, cfg: &ExperimentConfig, ctx: &Context) -> Result<Report, CliError> {
        match self {
            Command::Spectrum => commands::spectrum(cfg, ctx),
            Command::Spacing => commands::spacing(cfg, ctx),
            Command::Fotoc => commands::fotoc(cfg, ctx),
            Command::Echo => commands::echo(cfg, ctx),
            Command::LyapunovScan => commands::lyapunov_scan(cfg, ctx),
            Command::Equilibrate => commands::equilibrate(cfg, ctx),
            Command::DeffScan => commands::deff_scan(cfg, ctx),
            Command::OracleCheck => commands::oracle_check(cfg, ctx),
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config {
        key: "--config".into(),
        message: "no configuration given (flag or RABI_CHAOS_CONFIG)".into(),
    })?;
    let cfg = ExperimentConfig::load(path)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config { key: "--threads".into(), message: "must be at least 1".into() });
        }
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let output_dir =
        cli.output_dir.clone().or_else(|| cfg.output.directory.clone()).unwrap_or_else(|| PathBuf::from("output"));
    std::fs::create_dir_all(&output_dir).map_err(|e| CliError::io(format!("creating {}", output_dir.display()), e))?;
    let cache = cli.cache_dir.as_deref().map(SpectrumCache::open).transpose()?;
    let ctx = Context { output_dir, cache };

    let report = cli.command.run(&cfg, &ctx)?;
    let mut outputs = Vec::new();
    for t in &report.tables {
        let p = t.write(&ctx.output_dir)?;
        outputs.push(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
    }
    let meta = Meta {
        subcommand: cli.command.name(),
        config: &cfg,
        package_version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        seed: cli.seed,
        cache: report.cache.clone(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs,
        results: report.results,
    };
    write_meta(&ctx.output_dir, &meta)?;
    match report.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
