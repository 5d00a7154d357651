//! `isopde`: config-driven experiments on weighted warped-product annuli.
//!
//! Verbs: `run <config>` executes one scenario, `validate <config>` checks
//! a config and reports every violation, `suite` runs the bundled scenario
//! catalogue, `plot <record.json>` re-emits the SVG charts of an existing
//! record. Output directory resolution: `--out-dir`, then the `ISOPDE_OUT`
//! environment variable, then the config's `out_dir`, then the current
//! directory.
//!
//! Exit codes: 0 when everything passed, 1 when a scenario assertion or
//! validation failed, 2 on hard errors (unreadable files, I/O).

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use isopde_core::harness::{emit_plots, run, validate_config, ExperimentRecord, RunOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Bundled scenario catalogue; `suite` runs these in order.
const BUNDLED: &[(&str, &str)] = &[
    (
        "affine_cylinder",
        include_str!("../../../configs/affine_cylinder.toml"),
    ),
    (
        "concave_slab",
        include_str!("../../../configs/concave_slab.toml"),
    ),
    (
        "uniqueness_slab",
        include_str!("../../../configs/uniqueness_slab.toml"),
    ),
    (
        "uniqueness_marginal",
        include_str!("../../../configs/uniqueness_marginal.toml"),
    ),
    (
        "threshold_gaussian",
        include_str!("../../../configs/threshold_gaussian.toml"),
    ),
    (
        "commutation_cylinder",
        include_str!("../../../configs/commutation_cylinder.toml"),
    ),
    (
        "slab_certified",
        include_str!("../../../configs/slab_certified.toml"),
    ),
    (
        "refinement_gaussian",
        include_str!("../../../configs/refinement_gaussian.toml"),
    ),
    (
        "tail_gaussian",
        include_str!("../../../configs/tail_gaussian.toml"),
    ),
];

#[derive(Parser)]
#[command(
    name = "isopde",
    version,
    about = "Weighted semilinear Dirichlet problems on warped annuli: solve, certify, record"
)]
struct Cli {
    /// Directory for records, CSV tables and plots.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override the seed of every executed config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Only report failures.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and execute one experiment config.
    Run {
        /// Path to a TOML experiment config.
        config: PathBuf,
    },
    /// Parse and validate a config, reporting all violations at once.
    Validate {
        /// Path to a TOML experiment config.
        config: PathBuf,
    },
    /// Run every bundled scenario config.
    Suite,
    /// Re-emit the SVG plots of an existing record.
    Plot {
        /// Path to a previously written <name>.record.json.
        record: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = init_jobs(jobs) {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(feature = "parallel")]
fn init_jobs(jobs: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("building the worker thread pool")
}

#[cfg(not(feature = "parallel"))]
fn init_jobs(_jobs: usize) -> Result<()> {
    eprintln!("note: built without the parallel feature; --jobs has no effect");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { config } => run_file(cli, config),
        Command::Validate { config } => validate_file(cli, config),
        Command::Suite => run_suite(cli),
        Command::Plot { record } => plot_record(cli, record),
    }
}

/// `--out-dir`, then `ISOPDE_OUT`, then the config's own `out_dir`, then
/// the working directory.
fn resolve_out_dir(cli: &Cli, config_dir: Option<&str>) -> PathBuf {
    if let Some(dir) = &cli.out_dir {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("ISOPDE_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    match config_dir {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from("."),
    }
}

fn run_file(cli: &Cli, path: &Path) -> Result<bool> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let config =
        validate_config(&raw).with_context(|| format!("validating {}", path.display()))?;
    let record = execute(cli, &config)?;
    Ok(record.passed())
}

fn execute(cli: &Cli, config: &isopde_core::harness::ExperimentConfig) -> Result<ExperimentRecord> {
    let out_dir = resolve_out_dir(cli, config.out_dir.as_deref());
    let record = run(
        config,
        &RunOptions {
            out_dir: out_dir.clone(),
            seed: cli.seed,
        },
    )
    .with_context(|| format!("running scenario {}", config.name))?;
    report(cli, &record, &out_dir);
    Ok(record)
}

fn report(cli: &Cli, record: &ExperimentRecord, out_dir: &Path) {
    if record.passed() {
        if !cli.quiet {
            println!(
                "pass {} ({}, {} rows, {:.0} ms) -> {}",
                record.name,
                record.scenario.name(),
                record.grids.len(),
                record.timing.total_ms,
                out_dir.display()
            );
        }
    } else {
        println!(
            "FAIL {} ({}) -> {}",
            record.name,
            record.scenario.name(),
            out_dir.display()
        );
        for f in &record.failures {
            println!("  failure: {f}");
        }
    }
}

fn validate_file(cli: &Cli, path: &Path) -> Result<bool> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    match validate_config(&raw) {
        Ok(config) => {
            if !cli.quiet {
                println!(
                    "ok: {} ({}, seed {})",
                    config.name,
                    config.scenario.name(),
                    config.seed
                );
            }
            Ok(true)
        }
        Err(e) => {
            println!("invalid: {}", path.display());
            for violation in e.to_string().split("; ") {
                println!("  {violation}");
            }
            Ok(false)
        }
    }
}

fn run_suite(cli: &Cli) -> Result<bool> {
    let mut all_passed = true;
    for (name, raw) in BUNDLED {
        let config = validate_config(raw)
            .with_context(|| format!("bundled config {name} failed validation"))?;
        let record = execute(cli, &config)?;
        all_passed &= record.passed();
    }
    if !cli.quiet {
        println!(
            "suite: {}",
            if all_passed { "all passed" } else { "FAILURES" }
        );
    }
    Ok(all_passed)
}

fn plot_record(cli: &Cli, path: &Path) -> Result<bool> {
    let record = ExperimentRecord::load(path)
        .with_context(|| format!("loading {}", path.display()))?;
    let out_dir = resolve_out_dir(cli, None);
    let plots = emit_plots(&record, &out_dir)
        .with_context(|| format!("plotting {}", record.name))?;
    if !cli.quiet {
        for file in &plots.files {
            println!("wrote {}", file.display());
        }
        for note in &plots.notes {
            println!("note: {note}");
        }
    }
    Ok(true)
}
