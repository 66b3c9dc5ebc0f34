//! Experiment reports: aggregates, ECDF curves and the files written for
//! external plotting.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csmc_core::metrics::{ecdf_steps, write_trials_csv, TrialRecord};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Metric keys in the order they appear in CSV outputs.
pub const METRIC_KEYS: [&str; 3] = ["nmae", "hr", "snr"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std })
    }
}

/// Trials sharing algorithm, rho and rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub algorithm: String,
    pub alpha: Option<f64>,
    pub rho: f64,
    pub rank: Option<usize>,
    pub trials: usize,
    pub failed: usize,
    pub epsilon: Option<MeanStd>,
    pub elapsed_s: Option<MeanStd>,
    pub metrics: BTreeMap<String, MeanStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfCurve {
    pub algorithm: String,
    pub rho: f64,
    pub rank: Option<usize>,
    /// `(a, F(a))` at each distinct error.
    pub steps: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub rng: String,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub environment: Environment,
    pub trials: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    pub ecdf: Vec<EcdfCurve>,
    /// Suite-specific extras such as loader provenance or diagnostics.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
}

type CellKey = (String, u64, Option<usize>);

fn cell_key(r: &TrialRecord) -> CellKey {
    (r.algorithm.clone(), r.rho.to_bits(), r.rank)
}

/// Groups trials by (algorithm, rho, rank) in order of first appearance.
fn cells(trials: &[TrialRecord]) -> Vec<Vec<&TrialRecord>> {
    let mut order: Vec<CellKey> = Vec::new();
    let mut groups: BTreeMap<CellKey, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        let key = cell_key(t);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(t);
    }
    order
        .into_iter()
        .map(|k| groups.remove(&k).unwrap_or_default())
        .collect()
}

pub fn aggregate(trials: &[TrialRecord]) -> Vec<Aggregate> {
    cells(trials)
        .into_iter()
        .map(|group| {
            let ok: Vec<&TrialRecord> = group
                .iter()
                .copied()
                .filter(|t| t.error.is_none())
                .collect();
            let eps: Vec<f64> = ok.iter().filter_map(|t| t.epsilon).collect();
            let times: Vec<f64> = ok.iter().map(|t| t.elapsed_s).collect();
            let mut metrics = BTreeMap::new();
            for key in METRIC_KEYS {
                let values: Vec<f64> = ok
                    .iter()
                    .filter_map(|t| t.extra.get(key).copied())
                    .collect();
                if let Some(ms) = MeanStd::of(&values) {
                    metrics.insert(key.to_string(), ms);
                }
            }
            let first = group[0];
            Aggregate {
                algorithm: first.algorithm.clone(),
                alpha: first.alpha,
                rho: first.rho,
                rank: first.rank,
                trials: group.len(),
                failed: group.len() - ok.len(),
                epsilon: MeanStd::of(&eps),
                elapsed_s: MeanStd::of(&times),
                metrics,
            }
        })
        .collect()
}

pub fn ecdf_curves(trials: &[TrialRecord]) -> Vec<EcdfCurve> {
    cells(trials)
        .into_iter()
        .filter_map(|group| {
            let eps: Vec<f64> = group.iter().filter_map(|t| t.epsilon).collect();
            let steps = ecdf_steps(&eps).ok()?;
            Some(EcdfCurve {
                algorithm: group[0].algorithm.clone(),
                rho: group[0].rho,
                rank: group[0].rank,
                steps,
            })
        })
        .collect()
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, trials: Vec<TrialRecord>) -> Self {
        ExperimentReport {
            environment: Environment {
                version: env!("CARGO_PKG_VERSION").to_string(),
                rng: csmc_core::Rng::ALGORITHM.to_string(),
                threads: config.threads,
            },
            config,
            aggregates: aggregate(&trials),
            ecdf: ecdf_curves(&trials),
            trials,
            details: BTreeMap::new(),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, out: BufWriter<File>) -> Result<(), CliError> {
    out.into_inner()
        .map_err(|e| CliError::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| CliError::io(path, e))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// File-name fragment for an optional rank.
fn rank_tag(rank: Option<usize>) -> String {
    rank.map_or_else(|| "na".to_string(), |r| r.to_string())
}

/// Writes `ecdf_<algo>_<rho>_<rank>.csv`, `runtimes.csv` and `metrics.csv`
/// into `dir` and returns their paths.
pub fn emit_plots_data(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();

    for curve in &report.ecdf {
        let path = dir.join(format!(
            "ecdf_{}_{}_{}.csv",
            curve.algorithm,
            curve.rho,
            rank_tag(curve.rank)
        ));
        let mut out = create(&path)?;
        writeln!(out, "a,F").map_err(io(&path))?;
        for (a, f) in &curve.steps {
            writeln!(out, "{a},{f}").map_err(io(&path))?;
        }
        finish(&path, out)?;
        written.push(path);
    }

    let path = dir.join("runtimes.csv");
    let mut out = create(&path)?;
    writeln!(out, "trial,algorithm,alpha,rho,rank,elapsed_s").map_err(io(&path))?;
    for t in report.trials.iter().filter(|t| t.error.is_none()) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t.trial,
            t.algorithm,
            fmt_opt(t.alpha),
            t.rho,
            fmt_opt(t.rank),
            t.elapsed_s
        )
        .map_err(io(&path))?;
    }
    finish(&path, out)?;
    written.push(path);

    let present: Vec<&str> = METRIC_KEYS
        .into_iter()
        .filter(|k| report.aggregates.iter().any(|a| a.metrics.contains_key(*k)))
        .collect();
    let path = dir.join("metrics.csv");
    let mut out = create(&path)?;
    let mut header =
        String::from("algorithm,alpha,rho,rank,trials,failed,epsilon_mean,epsilon_std");
    for k in &present {
        header.push_str(&format!(",{k}_mean,{k}_std"));
    }
    writeln!(out, "{header}").map_err(io(&path))?;
    for a in &report.aggregates {
        let mut line = format!(
            "{},{},{},{},{},{},{},{}",
            a.algorithm,
            fmt_opt(a.alpha),
            a.rho,
            fmt_opt(a.rank),
            a.trials,
            a.failed,
            fmt_opt(a.epsilon.map(|m| m.mean)),
            fmt_opt(a.epsilon.map(|m| m.std)),
        );
        for k in &present {
            let m = a.metrics.get(*k);
            line.push_str(&format!(
                ",{},{}",
                fmt_opt(m.map(|m| m.mean)),
                fmt_opt(m.map(|m| m.std))
            ));
        }
        writeln!(out, "{line}").map_err(io(&path))?;
    }
    finish(&path, out)?;
    written.push(path);
    Ok(written)
}

/// Writes `report.json`, `trials.csv` and the plot data into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let json = dir.join("report.json");
    let mut out = create(&json)?;
    serde_json::to_writer_pretty(&mut out, report)
        .map_err(|e| CliError::Data(format!("{}: {e}", json.display())))?;
    writeln!(out).map_err(|e| CliError::io(&json, e))?;
    finish(&json, out)?;

    let csv = dir.join("trials.csv");
    let mut out = create(&csv)?;
    write_trials_csv(&mut out, &report.trials).map_err(|e| CliError::io(&csv, e))?;
    finish(&csv, out)?;

    let mut written = vec![json, csv];
    for (key, value) in &report.details {
        let path = dir.join(format!("{key}.json"));
        let mut out = create(&path)?;
        serde_json::to_writer_pretty(&mut out, value)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        writeln!(out).map_err(|e| CliError::io(&path, e))?;
        finish(&path, out)?;
        written.push(path);
    }
    written.extend(emit_plots_data(report, dir)?);
    Ok(written)
}
