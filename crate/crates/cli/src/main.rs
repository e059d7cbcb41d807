use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use hetnet_cli::config::parse_range;
use hetnet_cli::experiment::{validate_de, write_validation};
use hetnet_cli::{load_config, run_experiment, write_outputs, ExperimentConfig, Overrides};
use hetnet_core::sim::Policy;
use hetnet_core::Deployment;

/// Sweeps a massive-MIMO macrocell with small-cell hotspots and writes
/// tradeoff, offload and rate tables.
#[derive(Debug, Parser)]
#[command(name = "hetnet", version)]
struct Cli {
    /// TOML config; missing keys take the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated policies: none, onoff, offload, tin.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<Policy>>,
    /// Comma-separated deployments: interior, uniform, edge.
    #[arg(long, value_delimiter = ',')]
    deployment: Option<Vec<Deployment>>,
    /// Inclusive range of macro group counts, `A:B`.
    #[arg(long)]
    sweep_g: Option<String>,
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Comma-separated small-cell counts.
    #[arg(long, value_delimiter = ',')]
    nf: Option<Vec<usize>>,
    #[arg(long)]
    drops: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    /// Also write per-group rates to ratecdf.csv.
    #[arg(long)]
    ratecdf: bool,
    /// Print the resolved config and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Compare deterministic equivalents with Monte-Carlo SINRs instead of
    /// running the sweep.
    #[arg(long)]
    validate_de: bool,
}

fn resolve(cli: Cli) -> anyhow::Result<(ExperimentConfig, bool, bool)> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(Overrides {
        seed: cli.seed,
        out: cli.out,
        policies: cli.policy,
        deployments: cli.deployment,
        groups: cli
            .sweep_g
            .as_deref()
            .map(parse_range)
            .transpose()
            .map_err(anyhow::Error::msg)?,
        gammas: cli.gamma,
        small_cells: cli.nf,
        drops: cli.drops,
        slots: cli.slots,
        ratecdf: cli.ratecdf,
    })?;
    Ok((cfg, cli.dry_run, cli.validate_de))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let (cfg, dry_run, validate) = resolve(Cli::parse())?;
    if dry_run {
        println!("# config_hash = {}", cfg.hash());
        print!("{}", cfg.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    if validate {
        let rows = validate_de(&cfg, &[32, 64, 128, 256]).context("DE validation")?;
        for r in &rows {
            println!(
                "M={:<4} median rel. error {:.4} (macro {:.4}, small cell {:.4})",
                r.antennas, r.median_rel_error, r.macro_median_rel_error, r.sc_median_rel_error
            );
        }
        let path = write_validation(&cfg.out, &rows)?;
        println!("wrote {}", path.display());
        return Ok(ExitCode::SUCCESS);
    }
    let report = run_experiment(&cfg);
    for path in write_outputs(&cfg, &report)? {
        println!("wrote {}", path.display());
    }
    if report.failures() > 0 {
        eprintln!("{} drop(s) failed; see the status column", report.failures());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
