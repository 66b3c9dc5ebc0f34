//! Benchmark suites. Every trial derives its randomness from
//! `seed + trial`: stream 0 generates synthetic data, stream 1 draws the
//! observation mask or train/test split, stream 2 selects columns.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use csmc_core::datasets::{
    gen_synthetic, load_image_gray, load_movielens, save_image_gray, SyntheticSpec,
};
use csmc_core::diagnostics::{coherence, condition_number, recovery_bounds, RecoveryInputs};
use csmc_core::io::{read_matrix, write_dense_csv};
use csmc_core::metrics::{hit_rate, nmae, relative_error, snr, RatingScale, TrialRecord};
use csmc_core::sampling::{sample_mask, split_train_test};
use csmc_core::{
    csmc_complete, mf_als_complete, DenseMatrix, MaskedMatrix, ObservationSet, Rng, SolverConfig,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Algorithm, ExperimentConfig, Suite};
use crate::error::CliError;
use crate::report::ExperimentReport;

const MASK_STREAM: u64 = 1;
const COLUMN_STREAM: u64 = 2;

/// One algorithm in one parameter cell. `rank` is the generated rank for
/// synthetic data and the factor rank for `MF`.
#[derive(Clone, Copy, Debug)]
struct Run {
    algorithm: Algorithm,
    rank: Option<usize>,
}

/// Completes `obs` with `run` and returns the estimate and the solve time.
fn solve(
    run: Run,
    obs: &MaskedMatrix,
    cfg: &ExperimentConfig,
    seed: u64,
) -> csmc_core::Result<(DenseMatrix, f64)> {
    let solver_cfg = SolverConfig {
        seed,
        ..cfg.solver.clone()
    };
    let start = Instant::now();
    let m_hat = match run.algorithm {
        Algorithm::Full(s) => s.run(obs, &solver_cfg)?.matrix,
        Algorithm::Csmc { solver, alpha } => {
            let mut rng = Rng::new(seed).stream(COLUMN_STREAM);
            csmc_complete(obs, alpha, solver, &solver_cfg, &mut rng)?.m_hat
        }
        Algorithm::Mf { k } => {
            let k = k
                .or(run.rank)
                .ok_or_else(|| csmc_core::Error::Domain("MF needs a rank".into()))?;
            mf_als_complete(obs, k, cfg.mf_reg, &solver_cfg)?.matrix
        }
    };
    Ok((m_hat, start.elapsed().as_secs_f64()))
}

fn record(run: Run, trial: usize, rho: f64) -> TrialRecord {
    TrialRecord {
        trial,
        algorithm: run.algorithm.to_string(),
        alpha: run.algorithm.alpha(),
        rho,
        rank: run.rank,
        epsilon: None,
        elapsed_s: 0.0,
        extra: BTreeMap::new(),
        error: None,
    }
}

fn failed(mut rec: TrialRecord, err: impl ToString) -> TrialRecord {
    rec.epsilon = None;
    rec.elapsed_s = 0.0;
    rec.extra.clear();
    rec.error = Some(err.to_string());
    rec
}

/// Runs for suites on real data: `MF` without an explicit rank is repeated
/// over the rank grid, everything else runs once with no rank.
fn data_runs(cfg: &ExperimentConfig) -> Vec<Run> {
    let mut runs = Vec::new();
    for &algorithm in &cfg.algorithms {
        match algorithm {
            Algorithm::Mf { k: None } => {
                runs.extend(cfg.ranks.iter().map(|&r| Run {
                    algorithm,
                    rank: Some(r),
                }));
            }
            Algorithm::Mf { k: Some(k) } => runs.push(Run {
                algorithm,
                rank: Some(k),
            }),
            _ => runs.push(Run {
                algorithm,
                rank: None,
            }),
        }
    }
    runs
}

/// Evaluates `work` over `tasks` on a pool of `threads` workers, keeping task
/// order, then orders the records by cell and trial.
fn execute<T, F>(tasks: &[T], threads: usize, work: F) -> Result<Vec<TrialRecord>, CliError>
where
    T: Sync,
    F: Fn(&T) -> Vec<(usize, TrialRecord)> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    let nested: Vec<Vec<(usize, TrialRecord)>> =
        pool.install(|| tasks.par_iter().map(&work).collect());
    let mut flat: Vec<(usize, TrialRecord)> = nested.into_iter().flatten().collect();
    flat.sort_by_key(|(cell, rec)| (*cell, rec.trial));
    Ok(flat.into_iter().map(|(_, rec)| rec).collect())
}

fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.seed.wrapping_add(trial as u64)
}

fn mask_for(n1: usize, n2: usize, rho: f64, seed: u64) -> csmc_core::Result<ObservationSet> {
    if rho >= 1.0 {
        return Ok(ObservationSet::full(n1, n2));
    }
    sample_mask(n1, n2, rho, &mut Rng::new(seed).stream(MASK_STREAM))
}

fn run_synth(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let s = &cfg.synth;
    if s.n1 == 0 || s.n2 == 0 {
        return Err(CliError::Usage(
            "synthetic dimensions must be positive".into(),
        ));
    }
    for &rank in &cfg.ranks {
        SyntheticSpec {
            noise_density: s.noise_density,
            noise_scale: s.noise_scale,
            ..SyntheticSpec::new(s.n1, s.n2, rank, cfg.seed)
        }
        .validate()
        .map_err(|e| CliError::Usage(format!("synth config: {e}")))?;
    }
    let n_alg = cfg.algorithms.len();
    let mut tasks = Vec::new();
    for (ri, &rho) in cfg.rhos.iter().enumerate() {
        for (ki, &rank) in cfg.ranks.iter().enumerate() {
            for trial in 0..cfg.n_trials {
                tasks.push((ri * cfg.ranks.len() + ki, rho, rank, trial));
            }
        }
    }
    let trials = execute(&tasks, cfg.threads, |&(cell, rho, rank, trial)| {
        let seed = trial_seed(cfg, trial);
        let spec = SyntheticSpec {
            noise_density: s.noise_density,
            noise_scale: s.noise_scale,
            ..SyntheticSpec::new(s.n1, s.n2, rank, seed)
        };
        let instance = gen_synthetic(&spec).and_then(|m| {
            let obs = MaskedMatrix::new(m.clone(), mask_for(s.n1, s.n2, rho, seed)?)?;
            Ok((m, obs))
        });
        cfg.algorithms
            .iter()
            .enumerate()
            .map(|(ai, &algorithm)| {
                let run = Run {
                    algorithm,
                    rank: Some(rank),
                };
                let rec = record(run, trial, rho);
                let out = instance
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|(m, obs)| {
                        let (m_hat, elapsed) =
                            solve(run, obs, cfg, seed).map_err(|e| e.to_string())?;
                        let eps = relative_error(&m_hat, m).map_err(|e| e.to_string())?;
                        Ok((eps, elapsed))
                    });
                let rec = match out {
                    Ok((eps, elapsed)) => TrialRecord {
                        epsilon: Some(eps),
                        elapsed_s: elapsed,
                        ..rec
                    },
                    Err(e) => failed(rec, e),
                };
                (cell * n_alg + ai, rec)
            })
            .collect()
    })?;
    Ok(ExperimentReport::new(cfg.clone(), trials))
}

fn run_movielens(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let path = cfg.movielens.ratings.as_ref().ok_or_else(|| {
        CliError::Usage("the movielens suite needs a ratings file (--ratings)".into())
    })?;
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "ratings file not found: {}",
            path.display()
        )));
    }
    let (data, provenance) = load_movielens(path, &cfg.movielens.options)?;
    let ratings = data.ratings;
    let scale = data.scale;
    let runs = data_runs(cfg);

    let mut tasks = Vec::new();
    for (ri, &rho) in cfg.rhos.iter().enumerate() {
        for trial in 0..cfg.n_trials {
            tasks.push((ri, rho, trial));
        }
    }
    let trials = execute(&tasks, cfg.threads, |&(ri, rho, trial)| {
        let seed = trial_seed(cfg, trial);
        let split = split_train_test(ratings.mask(), rho, &mut Rng::new(seed).stream(MASK_STREAM))
            .and_then(|(train, test)| Ok((ratings.restrict_to(&train)?, test)));
        runs.iter()
            .enumerate()
            .map(|(k, &run)| {
                let rec = record(run, trial, rho);
                let out = split
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|(train, test)| {
                        let (m_hat, elapsed) =
                            solve(run, train, cfg, seed).map_err(|e| e.to_string())?;
                        evaluate_ratings(&m_hat, ratings.values(), test, scale)
                            .map(|(eps, metrics)| (eps, metrics, elapsed))
                            .map_err(|e| e.to_string())
                    });
                let rec = match out {
                    Ok((eps, extra, elapsed)) => TrialRecord {
                        epsilon: Some(eps),
                        elapsed_s: elapsed,
                        extra,
                        ..rec
                    },
                    Err(e) => failed(rec, e),
                };
                (ri * runs.len() + k, rec)
            })
            .collect()
    })?;
    let mut report = ExperimentReport::new(cfg.clone(), trials);
    report.details.insert(
        "provenance".into(),
        serde_json::to_value(&provenance).map_err(|e| CliError::Data(e.to_string()))?,
    );
    Ok(report)
}

/// Relative error, NMAE and hit rate on the held-out ratings.
fn evaluate_ratings(
    m_hat: &DenseMatrix,
    truth: &DenseMatrix,
    test: &ObservationSet,
    scale: RatingScale,
) -> csmc_core::Result<(f64, BTreeMap<String, f64>)> {
    let pairs: Vec<(f64, f64)> = test
        .iter()
        .map(|(i, j)| (m_hat.get(i, j), truth.get(i, j)))
        .collect();
    let num: f64 = pairs.iter().map(|(p, t)| (p - t).powi(2)).sum();
    let den: f64 = pairs.iter().map(|(_, t)| t * t).sum();
    if den == 0.0 {
        return Err(csmc_core::Error::Domain(
            "held-out ratings are all zero".into(),
        ));
    }
    let mut extra = BTreeMap::new();
    extra.insert("nmae".to_string(), nmae(&pairs, scale)?);
    extra.insert("hr".to_string(), hit_rate(&pairs, scale)?);
    Ok(((num / den).sqrt(), extra))
}

fn run_inpaint(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    if cfg.inpaint.images.is_empty() {
        return Err(CliError::Usage(
            "the inpaint suite needs at least one image (--image)".into(),
        ));
    }
    let mut images = Vec::new();
    for path in &cfg.inpaint.images {
        if !path.is_file() {
            return Err(CliError::Data(format!(
                "image file not found: {}",
                path.display()
            )));
        }
        images.push(load_image_gray(path)?);
    }
    let recon_dir = cfg.out.join("reconstructions");
    fs::create_dir_all(&recon_dir).map_err(|e| CliError::io(&recon_dir, e))?;
    let runs = data_runs(cfg);

    let mut tasks = Vec::new();
    for (ri, &rho) in cfg.rhos.iter().enumerate() {
        for img in 0..images.len() {
            for t in 0..cfg.n_trials {
                tasks.push((ri, rho, img, t));
            }
        }
    }
    let trials = execute(&tasks, cfg.threads, |&(ri, rho, img, t)| {
        let trial = img * cfg.n_trials + t;
        let seed = trial_seed(cfg, trial);
        let m = &images[img];
        let (n1, n2) = m.shape();
        let obs = mask_for(n1, n2, rho, seed).and_then(|mask| MaskedMatrix::new(m.clone(), mask));
        runs.iter()
            .enumerate()
            .map(|(k, &run)| {
                let rec = record(run, trial, rho);
                let out = obs.as_ref().map_err(|e| e.to_string()).and_then(|obs| {
                    let (m_hat, elapsed) = solve(run, obs, cfg, seed).map_err(|e| e.to_string())?;
                    let eps = relative_error(&m_hat, m).map_err(|e| e.to_string())?;
                    let db = snr(&m_hat, m).map_err(|e| e.to_string())?;
                    if t == 0 {
                        let path =
                            recon_dir.join(format!("img{img}_{}_rho{rho}.png", run.algorithm));
                        save_image_gray(&m_hat, &path).map_err(|e| e.to_string())?;
                    }
                    Ok((eps, db, elapsed))
                });
                let rec = match out {
                    Ok((eps, db, elapsed)) => TrialRecord {
                        epsilon: Some(eps),
                        elapsed_s: elapsed,
                        extra: BTreeMap::from([("snr".to_string(), db)]),
                        ..rec
                    },
                    Err(e) => failed(rec, e),
                };
                (ri * runs.len() + k, rec)
            })
            .collect()
    })?;
    let mut report = ExperimentReport::new(cfg.clone(), trials);
    let listing: Vec<_> = cfg
        .inpaint
        .images
        .iter()
        .zip(&images)
        .map(|(p, m)| json!({ "path": p, "rows": m.rows(), "cols": m.cols() }))
        .collect();
    report.details.insert("images".into(), json!(listing));
    Ok(report)
}

fn read_input(path: Option<&PathBuf>, suite: Suite) -> Result<MaskedMatrix, CliError> {
    let path = path.ok_or_else(|| CliError::Usage(format!("the {suite} command needs --input")))?;
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "input file not found: {}",
            path.display()
        )));
    }
    Ok(read_matrix(path)?)
}

fn run_complete(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let obs = read_input(cfg.complete.input.as_ref(), Suite::Complete)?;
    let truth = match &cfg.complete.truth {
        Some(path) => {
            let t = read_matrix(path)?;
            if t.mask().len() != t.shape().0 * t.shape().1 {
                return Err(CliError::Data(format!(
                    "ground truth {} has missing entries",
                    path.display()
                )));
            }
            if t.shape() != obs.shape() {
                return Err(CliError::Data(format!(
                    "ground truth is {:?}, input is {:?}",
                    t.shape(),
                    obs.shape()
                )));
            }
            Some(t)
        }
        None => None,
    };
    let algorithm = cfg.algorithms[0];
    let run = Run {
        algorithm,
        rank: match algorithm {
            Algorithm::Mf { k } => k.or(Some(cfg.ranks[0])),
            _ => None,
        },
    };
    let seed = trial_seed(cfg, 0);
    let (m_hat, elapsed) = solve(run, &obs, cfg, seed)?;
    let epsilon = match &truth {
        Some(t) => Some(relative_error(&m_hat, t.values())?),
        None => None,
    };
    let output = cfg
        .complete
        .output
        .clone()
        .unwrap_or_else(|| cfg.out.join("completed.csv"));
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_dense_csv(&output, &m_hat)?;

    let rec = TrialRecord {
        epsilon,
        elapsed_s: elapsed,
        ..record(run, 0, obs.density())
    };
    let mut report = ExperimentReport::new(cfg.clone(), vec![rec]);
    report.details.insert(
        "complete".into(),
        json!({
            "input": cfg.complete.input,
            "output": output,
            "rows": obs.shape().0,
            "cols": obs.shape().1,
            "observed": obs.mask().len(),
            "algorithm": algorithm.to_string(),
            "epsilon": epsilon,
            "elapsed_s": elapsed,
        }),
    );
    Ok(report)
}

fn run_diagnose(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let obs = read_input(cfg.diagnose.input.as_ref(), Suite::Diagnose)?;
    let (n1, n2) = obs.shape();
    let fully_observed = obs.mask().len() == n1 * n2;
    let m = if fully_observed {
        obs.values().clone()
    } else {
        let run = Run {
            algorithm: cfg.algorithms[0],
            rank: Some(cfg.ranks[0]),
        };
        solve(run, &obs, cfg, trial_seed(cfg, 0))?.0
    };
    let tol = cfg.diagnose.rank_tol;
    let mu = coherence(&m, tol)?;
    if mu.rank == 0 {
        return Err(CliError::Data(
            "matrix is numerically zero; coherence is undefined".into(),
        ));
    }
    let kappa = condition_number(&m, tol)?;
    let inputs = RecoveryInputs {
        n1,
        n2,
        rank: mu.rank,
        rank_c: mu.rank,
        mu0_m: mu.mu0,
        mu0_c: mu.mu0,
        kappa,
        gamma: cfg.diagnose.gamma,
    };
    let bounds = recovery_bounds(&inputs).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut report = ExperimentReport::new(cfg.clone(), Vec::new());
    report.details.insert(
        "diagnose".into(),
        json!({
            "input": cfg.diagnose.input,
            "completed_before_measuring": !fully_observed,
            "observed": obs.mask().len(),
            "coherence": mu,
            "kappa": kappa,
            "inputs": inputs,
            "bounds": bounds,
        }),
    );
    Ok(report)
}

/// Runs the configured suite. Failed trials are recorded and skipped;
/// missing inputs and invalid settings abort before any trial starts.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    match cfg.suite {
        Suite::Synth => run_synth(cfg),
        Suite::Movielens => run_movielens(cfg),
        Suite::Inpaint => run_inpaint(cfg),
        Suite::Complete => run_complete(cfg),
        Suite::Diagnose => run_diagnose(cfg),
    }
}

/// Runs the suite and writes its report files into the output directory.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Vec<PathBuf>), CliError> {
    let report = run_suite(cfg)?;
    let written = crate::report::write_report(&report, &cfg.out)?;
    Ok((report, written))
}
