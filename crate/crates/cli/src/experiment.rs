//! Sweep orchestration and output files.
//!
//! Drops run in parallel. Each drop builds its layout and gain table once
//! and then runs every (policy, G, gamma) point on it. Results are collected
//! in drop order, so the outputs do not depend on thread timing.
//!
//! Files, all keyed by `seed` and `config_hash`:
//! * `tradeoff.csv`: one row per (deployment, n_f, policy, G, gamma) with
//!   drop means and 95% half-widths of the macro, small-cell and total
//!   throughput (bit/s/Hz summed over groups).
//! * `offload.csv`: offload fraction per (deployment, n_f, gamma).
//! * `ratecdf.csv` (opt-in): per-group long-term rates.
//! * `manifest.json`: resolved config, hash, versions and row counts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use hetnet_core::coordination::policy_offload;
use hetnet_core::sim::{aggregate, DropContext, DropResult, Policy};
use hetnet_core::stats::mean_ci;
use hetnet_core::{Deployment, SimParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub seed: u64,
    pub config_hash: String,
    pub policy: Policy,
    pub deployment: Deployment,
    pub n_f: usize,
    pub gamma: f64,
    #[serde(rename = "G")]
    pub groups: usize,
    pub drops: usize,
    pub failed_drops: usize,
    pub macro_total: f64,
    pub macro_ci: f64,
    pub sc_total: f64,
    pub sc_ci: f64,
    pub total: f64,
    pub total_ci: f64,
    pub offload_fraction: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffloadRow {
    pub seed: u64,
    pub config_hash: String,
    pub deployment: Deployment,
    pub n_f: usize,
    pub gamma: f64,
    pub drops: usize,
    pub fraction: f64,
    pub fraction_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub seed: u64,
    pub config_hash: String,
    pub policy: Policy,
    pub deployment: Deployment,
    pub n_f: usize,
    pub gamma: f64,
    #[serde(rename = "G")]
    pub groups: usize,
    pub drop: u64,
    pub group: usize,
    pub group_kind: String,
    pub rate: f64,
}

/// One (policy, G, gamma) combination; gamma only matters for offloading.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    policy: Policy,
    groups: usize,
    gamma: f64,
}

#[derive(Debug, Default)]
pub struct Report {
    pub tradeoff: Vec<TradeoffRow>,
    pub offload: Vec<OffloadRow>,
    pub rates: Vec<RateRow>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.tradeoff.iter().map(|r| r.failed_drops).sum()
    }
}

struct DropOutcome {
    /// Aligned with the point list.
    runs: Vec<DropResult>,
    /// Aligned with the gamma list.
    offload: Vec<f64>,
}

fn run_one_drop(
    params: &SimParams,
    deployment: Deployment,
    seed: u64,
    index: u64,
    points: &[Point],
    gammas: &[f64],
) -> Result<DropOutcome, String> {
    let ctx = DropContext::sample(params, deployment, seed, index).map_err(|e| e.to_string())?;
    let (p0, p1) = (params.macro_power(), params.sc_power());
    let n_macro = ctx.table.macro_groups().len().max(1) as f64;
    let offload = gammas
        .iter()
        .map(|&g| policy_offload(&ctx.table, g, p0, p1).len() as f64 / n_macro)
        .collect();
    let mut runs: Vec<DropResult> = Vec::with_capacity(points.len());
    for (k, pt) in points.iter().enumerate() {
        // gamma only changes the offloading policy
        if pt.policy != Policy::Offload {
            if let Some(j) = points[..k]
                .iter()
                .position(|q| q.policy == pt.policy && q.groups == pt.groups)
            {
                runs.push(runs[j].clone());
                continue;
            }
        }
        let run_params = SimParams {
            max_groups: pt.groups,
            gamma: pt.gamma,
            ..params.clone()
        };
        runs.push(ctx.run(pt.policy, &run_params).map_err(|e| e.to_string())?);
    }
    Ok(DropOutcome { runs, offload })
}

/// Runs every sweep point and returns the output rows (nothing is written).
pub fn run_experiment(cfg: &ExperimentConfig) -> Report {
    let hash = cfg.hash();
    let points: Vec<Point> = cfg
        .policies
        .iter()
        .flat_map(|&policy| {
            cfg.groups
                .iter()
                .flat_map(move |&groups| cfg.gammas.iter().map(move |&gamma| Point { policy, groups, gamma }))
        })
        .collect();
    let mut report = Report::default();
    for &deployment in &cfg.deployments {
        for &n_f in &cfg.small_cells {
            let params = SimParams {
                n_small_cells: n_f,
                ..cfg.params.clone()
            };
            eprintln!(
                "[hetnet] {deployment} n_f={n_f}: {} drops x {} points",
                params.n_drops,
                points.len()
            );
            let outcomes: Vec<Result<DropOutcome, String>> = (0..params.n_drops as u64)
                .into_par_iter()
                .map(|k| run_one_drop(&params, deployment, cfg.seed, k, &points, &cfg.gammas))
                .collect();
            let ok: Vec<&DropOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
            let errors: Vec<&String> = outcomes.iter().filter_map(|o| o.as_ref().err()).collect();
            let status = match errors.first() {
                None => "ok".to_string(),
                Some(e) => format!("{} drop(s) failed, first: {e}", errors.len()),
            };

            for (j, &gamma) in cfg.gammas.iter().enumerate() {
                let fractions: Vec<f64> = ok.iter().map(|o| o.offload[j]).collect();
                let (fraction, fraction_ci) = if fractions.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    mean_ci(&fractions)
                };
                report.offload.push(OffloadRow {
                    seed: cfg.seed,
                    config_hash: hash.clone(),
                    deployment,
                    n_f,
                    gamma,
                    drops: fractions.len(),
                    fraction,
                    fraction_ci,
                });
            }

            for (k, pt) in points.iter().enumerate() {
                let drops: Vec<DropResult> = ok.iter().map(|o| o.runs[k].clone()).collect();
                let summary = aggregate(&drops).ok();
                let est = |f: fn(&hetnet_core::sim::Summary) -> (f64, f64)| {
                    summary.as_ref().map(f).unwrap_or((f64::NAN, f64::NAN))
                };
                let (macro_total, macro_ci) = est(|s| (s.macro_total.mean, s.macro_total.ci));
                let (sc_total, sc_ci) = est(|s| (s.smallcell_total.mean, s.smallcell_total.ci));
                let (total, total_ci) = est(|s| (s.total.mean, s.total.ci));
                let (offload_fraction, _) = est(|s| (s.offload_fraction.mean, s.offload_fraction.ci));
                report.tradeoff.push(TradeoffRow {
                    seed: cfg.seed,
                    config_hash: hash.clone(),
                    policy: pt.policy,
                    deployment,
                    n_f,
                    gamma: pt.gamma,
                    groups: pt.groups,
                    drops: drops.len(),
                    failed_drops: errors.len(),
                    macro_total,
                    macro_ci,
                    sc_total,
                    sc_ci,
                    total,
                    total_ci,
                    offload_fraction,
                    status: status.clone(),
                });
                if cfg.ratecdf {
                    for d in &drops {
                        for (group, (&rate, kind)) in d.rates.iter().zip(&d.kinds).enumerate() {
                            report.rates.push(RateRow {
                                seed: cfg.seed,
                                config_hash: hash.clone(),
                                policy: pt.policy,
                                deployment,
                                n_f,
                                gamma: pt.gamma,
                                groups: pt.groups,
                                drop: d.index,
                                group,
                                group_kind: kind.to_string(),
                                rate,
                            });
                        }
                    }
                }
            }
        }
    }
    report
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config_hash: String,
    tradeoff_rows: usize,
    offload_rows: usize,
    rate_rows: usize,
    failed_drops: usize,
    files: Vec<&'static str>,
    config: &'a ExperimentConfig,
}

/// Writes the report files into `cfg.out` and returns their paths.
pub fn write_outputs(cfg: &ExperimentConfig, report: &Report) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(&cfg.out).map_err(|source| OutputError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    let mut files = vec!["tradeoff.csv", "offload.csv"];
    write_csv(&cfg.out.join("tradeoff.csv"), &report.tradeoff)?;
    write_csv(&cfg.out.join("offload.csv"), &report.offload)?;
    if cfg.ratecdf {
        write_csv(&cfg.out.join("ratecdf.csv"), &report.rates)?;
        files.push("ratecdf.csv");
    }
    files.push("manifest.json");
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "hetnet",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        tradeoff_rows: report.tradeoff.len(),
        offload_rows: report.offload.len(),
        rate_rows: report.rates.len(),
        failed_drops: report.failures(),
        files: files.clone(),
        config: cfg,
    };
    let path = cfg.out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|source| OutputError::Io { path, source })?;
    Ok(files.into_iter().map(|f| cfg.out.join(f)).collect())
}

/// Row of the DE-versus-Monte-Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub antennas: usize,
    pub layouts: usize,
    pub draws: usize,
    pub median_rel_error: f64,
    pub macro_median_rel_error: f64,
    pub sc_median_rel_error: f64,
}

/// Validation scenario: 100 groups, 10 small cells with 16 antennas, 4
/// served macro groups, 10 layouts of 200 draws; other parameters from the
/// config.
pub fn validate_de(cfg: &ExperimentConfig, antennas: &[usize]) -> Result<Vec<ValidationRow>, hetnet_core::Error> {
    use hetnet_core::mcoracle::{validate_layouts, Receiver};
    use hetnet_core::stats::median;
    let (layouts, draws) = (10, 200);
    antennas
        .iter()
        .map(|&m| {
            let params = SimParams {
                n_groups: 100,
                n_small_cells: 10,
                sc_antennas: 16,
                macro_antennas: m,
                ..cfg.params.clone()
            };
            let runs = validate_layouts(&params, 4, layouts, draws, cfg.seed)?;
            let errs = |keep: fn(&Receiver) -> bool| {
                let e: Vec<f64> = runs
                    .iter()
                    .flat_map(|r| &r.comparisons)
                    .filter(|c| keep(&c.receiver))
                    .map(|c| c.rel_error())
                    .collect();
                median(&e)
            };
            Ok(ValidationRow {
                antennas: m,
                layouts,
                draws,
                median_rel_error: errs(|_| true),
                macro_median_rel_error: errs(|r| matches!(r, Receiver::Macro(_))),
                sc_median_rel_error: errs(|r| matches!(r, Receiver::SmallCell(_))),
            })
        })
        .collect()
}

pub fn write_validation(dir: &Path, rows: &[ValidationRow]) -> Result<PathBuf, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join("validate_de.csv");
    write_csv(&path, rows)?;
    Ok(path)
}
