//! Experiment configuration: JSON file values, command-line overrides and
//! per-suite defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csmc_core::datasets::MovieLensOptions;
use csmc_core::{SolverConfig, StageOneSolver};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Synth,
    Movielens,
    Inpaint,
    Complete,
    Diagnose,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Suite::Synth => "synth",
            Suite::Movielens => "movielens",
            Suite::Inpaint => "inpaint",
            Suite::Complete => "complete",
            Suite::Diagnose => "diagnose",
        };
        f.write_str(name)
    }
}

/// A benchmarked method: `NN`, `PGD`, `CSNN-<alpha>`, `CSPGD-<alpha>`, `MF` or
/// `MF-<k>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    Full(StageOneSolver),
    Csmc {
        solver: StageOneSolver,
        alpha: f64,
    },
    /// Matrix factorization; without an explicit `k` the cell's rank is used.
    Mf {
        k: Option<usize>,
    },
}

fn solver_tag(s: StageOneSolver) -> &'static str {
    match s {
        StageOneSolver::Nn => "NN",
        StageOneSolver::Pgd => "PGD",
    }
}

impl Algorithm {
    pub fn alpha(&self) -> Option<f64> {
        match self {
            Algorithm::Csmc { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Full(s) => f.write_str(solver_tag(*s)),
            Algorithm::Csmc { solver, alpha } => write!(f, "CS{}-{alpha}", solver_tag(*solver)),
            Algorithm::Mf { k: None } => f.write_str("MF"),
            Algorithm::Mf { k: Some(k) } => write!(f, "MF-{k}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let upper = s.trim().to_ascii_uppercase();
        let parse_alpha = |rest: &str| -> Result<f64, String> {
            let alpha: f64 = rest
                .parse()
                .map_err(|_| format!("invalid alpha in {s:?}"))?;
            if alpha > 0.0 && alpha <= 1.0 {
                Ok(alpha)
            } else {
                Err(format!("alpha must lie in (0, 1] in {s:?}"))
            }
        };
        match upper.as_str() {
            "NN" => return Ok(Algorithm::Full(StageOneSolver::Nn)),
            "PGD" => return Ok(Algorithm::Full(StageOneSolver::Pgd)),
            "MF" => return Ok(Algorithm::Mf { k: None }),
            _ => {}
        }
        if let Some(rest) = upper.strip_prefix("CSNN-") {
            return Ok(Algorithm::Csmc {
                solver: StageOneSolver::Nn,
                alpha: parse_alpha(rest)?,
            });
        }
        if let Some(rest) = upper.strip_prefix("CSPGD-") {
            return Ok(Algorithm::Csmc {
                solver: StageOneSolver::Pgd,
                alpha: parse_alpha(rest)?,
            });
        }
        if let Some(rest) = upper.strip_prefix("MF-") {
            let k: usize = rest.parse().map_err(|_| format!("invalid rank in {s:?}"))?;
            if k == 0 {
                return Err(format!("factor rank must be positive in {s:?}"));
            }
            return Ok(Algorithm::Mf { k: Some(k) });
        }
        Err(format!(
            "unknown algorithm {s:?} (expected NN, PGD, CSNN-<alpha>, CSPGD-<alpha>, MF or MF-<k>)"
        ))
    }
}

impl TryFrom<String> for Algorithm {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n1: usize,
    pub n2: usize,
    pub noise_density: f64,
    pub noise_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n1: 300,
            n2: 1000,
            noise_density: 0.3,
            noise_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovieLensConfig {
    pub ratings: Option<PathBuf>,
    pub options: MovieLensOptions,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpaintConfig {
    pub images: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompleteConfig {
    pub input: Option<PathBuf>,
    /// Fully observed ground truth for reporting the relative error.
    pub truth: Option<PathBuf>,
    /// Completed matrix; defaults to `<out>/completed.csv`.
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub input: Option<PathBuf>,
    pub gamma: f64,
    pub rank_tol: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            input: None,
            gamma: 20f64.ln(),
            rank_tol: csmc_core::diagnostics::DEFAULT_RANK_TOL,
        }
    }
}

/// Fully resolved configuration, echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub algorithms: Vec<Algorithm>,
    /// Observed fraction (synth, inpaint) or training fraction of the
    /// ratings (movielens).
    pub rhos: Vec<f64>,
    /// Generated rank (synth); factor rank for `MF` elsewhere.
    pub ranks: Vec<usize>,
    pub n_trials: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Ridge weight of the `MF` baseline.
    pub mf_reg: f64,
    pub threads: usize,
    pub out: PathBuf,
    pub synth: SynthConfig,
    pub movielens: MovieLensConfig,
    pub inpaint: InpaintConfig,
    pub complete: CompleteConfig,
    pub diagnose: DiagnoseConfig,
}

/// Optional values from a JSON file or the command line; anything left unset
/// falls back to the suite defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverrides {
    pub suite: Option<Suite>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub rhos: Option<Vec<f64>>,
    pub ranks: Option<Vec<usize>>,
    pub n_trials: Option<usize>,
    pub seed: Option<u64>,
    pub solver: Option<SolverConfig>,
    pub mf_reg: Option<f64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    pub movielens: Option<MovieLensConfig>,
    pub inpaint: Option<InpaintConfig>,
    pub complete: Option<CompleteConfig>,
    pub diagnose: Option<DiagnoseConfig>,
}

impl ConfigOverrides {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Values set in `other` replace those in `self`.
    pub fn merge(self, other: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            suite: other.suite.or(self.suite),
            algorithms: other.algorithms.or(self.algorithms),
            rhos: other.rhos.or(self.rhos),
            ranks: other.ranks.or(self.ranks),
            n_trials: other.n_trials.or(self.n_trials),
            seed: other.seed.or(self.seed),
            solver: other.solver.or(self.solver),
            mf_reg: other.mf_reg.or(self.mf_reg),
            threads: other.threads.or(self.threads),
            out: other.out.or(self.out),
            synth: other.synth.or(self.synth),
            movielens: other.movielens.or(self.movielens),
            inpaint: other.inpaint.or(self.inpaint),
            complete: other.complete.or(self.complete),
            diagnose: other.diagnose.or(self.diagnose),
        }
    }

    /// Fills unset values from the suite defaults and validates the result.
    pub fn resolve(self) -> Result<ExperimentConfig, CliError> {
        let cfg = self.fill_defaults()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills unset values from the suite defaults without validating.
    pub fn fill_defaults(self) -> Result<ExperimentConfig, CliError> {
        let suite = self
            .suite
            .ok_or_else(|| CliError::Usage("no suite selected".into()))?;
        let d = ExperimentConfig::defaults(suite);
        Ok(ExperimentConfig {
            suite,
            algorithms: self.algorithms.unwrap_or(d.algorithms),
            rhos: self.rhos.unwrap_or(d.rhos),
            ranks: self.ranks.unwrap_or(d.ranks),
            n_trials: self.n_trials.unwrap_or(d.n_trials),
            seed: self.seed.unwrap_or(d.seed),
            solver: self.solver.unwrap_or(d.solver),
            mf_reg: self.mf_reg.unwrap_or(d.mf_reg),
            threads: self.threads.unwrap_or(d.threads),
            out: self.out.unwrap_or(d.out),
            synth: self.synth.unwrap_or(d.synth),
            movielens: self.movielens.unwrap_or(d.movielens),
            inpaint: self.inpaint.unwrap_or(d.inpaint),
            complete: self.complete.unwrap_or(d.complete),
            diagnose: self.diagnose.unwrap_or(d.diagnose),
        })
    }
}

fn parse_list(s: &str) -> Vec<&str> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect()
}

impl ExperimentConfig {
    pub fn defaults(suite: Suite) -> Self {
        let algs = |names: &[&str]| {
            names
                .iter()
                .map(|n| n.parse().expect("valid default"))
                .collect()
        };
        let (algorithms, rhos, ranks, n_trials) = match suite {
            Suite::Synth => (algs(&["NN", "CSNN-0.2"]), vec![0.5], vec![5], 20),
            Suite::Movielens => (
                algs(&[
                    "NN",
                    "CSNN-0.3",
                    "CSNN-0.5",
                    "CSNN-0.7",
                    "CSPGD-0.3",
                    "CSPGD-0.5",
                ]),
                vec![0.8],
                vec![10],
                20,
            ),
            Suite::Inpaint => (algs(&["NN", "CSNN-0.7"]), vec![0.2], vec![10], 10),
            Suite::Complete => (algs(&["NN"]), vec![1.0], vec![5], 1),
            Suite::Diagnose => (algs(&["NN"]), vec![1.0], vec![5], 1),
        };
        ExperimentConfig {
            suite,
            algorithms,
            rhos,
            ranks,
            n_trials,
            seed: 0,
            solver: SolverConfig::default(),
            mf_reg: 0.1,
            threads: 1,
            out: PathBuf::from("csmc-out"),
            synth: SynthConfig::default(),
            movielens: MovieLensConfig::default(),
            inpaint: InpaintConfig::default(),
            complete: CompleteConfig::default(),
            diagnose: DiagnoseConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.algorithms.is_empty() {
            return usage("algorithm list is empty".into());
        }
        if self.rhos.is_empty() || self.ranks.is_empty() {
            return usage("rho and rank grids must be non-empty".into());
        }
        if self.n_trials == 0 {
            return usage("n_trials must be at least 1".into());
        }
        if self.threads == 0 {
            return usage("threads must be at least 1".into());
        }
        if self.ranks.contains(&0) {
            return usage("ranks must be positive".into());
        }
        let rho_ok = |r: f64| match self.suite {
            Suite::Movielens => r > 0.0 && r < 1.0,
            _ => r > 0.0 && r <= 1.0,
        };
        if let Some(r) = self.rhos.iter().find(|&&r| !rho_ok(r)) {
            return usage(format!(
                "rho {r} outside the admissible range for the {} suite",
                self.suite
            ));
        }
        if !(self.mf_reg >= 0.0 && self.mf_reg.is_finite()) {
            return usage(format!(
                "mf_reg must be finite and non-negative, got {}",
                self.mf_reg
            ));
        }
        self.solver
            .validate()
            .map_err(|e| CliError::Usage(format!("solver config: {e}")))?;
        let d = &self.diagnose;
        if !(d.gamma > 0.0 && d.gamma.is_finite()) {
            return usage(format!("gamma must be positive, got {}", d.gamma));
        }
        if !(d.rank_tol > 0.0 && d.rank_tol < 1.0) {
            return usage(format!("rank_tol must lie in (0, 1), got {}", d.rank_tol));
        }
        if matches!(self.suite, Suite::Complete) && self.algorithms.len() != 1 {
            return usage("complete runs exactly one algorithm".into());
        }
        Ok(())
    }
}

/// Parses a comma-separated list of values.
pub fn parse_grid<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    let items = parse_list(s);
    if items.is_empty() {
        return Err(CliError::Usage(format!("empty {what} list")));
    }
    items
        .into_iter()
        .map(|t| {
            t.parse()
                .map_err(|_| CliError::Usage(format!("invalid {what} value {t:?}")))
        })
        .collect()
}

pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>, CliError> {
    let items = parse_list(s);
    if items.is_empty() {
        return Err(CliError::Usage("empty algorithm list".into()));
    }
    items
        .into_iter()
        .map(|t| t.parse().map_err(CliError::Usage))
        .collect()
}

/// Applies `--alpha` and `--solver` to an algorithm list.
///
/// `solver` switches the first-stage solver of every columns-selected entry
/// and the full-matrix baseline. `alphas` replaces the columns-selected
/// entries by one per alpha, keeping the baselines.
pub fn apply_alpha_solver(
    algorithms: &[Algorithm],
    alphas: Option<&[f64]>,
    solver: Option<StageOneSolver>,
) -> Result<Vec<Algorithm>, CliError> {
    let mut out: Vec<Algorithm> = algorithms
        .iter()
        .map(|a| match (a, solver) {
            (Algorithm::Full(_), Some(s)) => Algorithm::Full(s),
            (Algorithm::Csmc { alpha, .. }, Some(s)) => Algorithm::Csmc {
                solver: s,
                alpha: *alpha,
            },
            _ => *a,
        })
        .collect();
    if let Some(alphas) = alphas {
        if let Some(bad) = alphas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(CliError::Usage(format!(
                "alpha must lie in (0, 1], got {bad}"
            )));
        }
        let cs_solver = solver
            .or_else(|| {
                out.iter().find_map(|a| match a {
                    Algorithm::Csmc { solver, .. } => Some(*solver),
                    _ => None,
                })
            })
            .unwrap_or(StageOneSolver::Nn);
        out.retain(|a| !matches!(a, Algorithm::Csmc { .. }));
        out.extend(alphas.iter().map(|&alpha| Algorithm::Csmc {
            solver: cs_solver,
            alpha,
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for name in ["NN", "PGD", "CSNN-0.2", "CSPGD-0.35", "MF", "MF-5"] {
            let a: Algorithm = name.parse().unwrap();
            assert_eq!(a.to_string(), name);
        }
        assert_eq!(
            "csnn-0.5".parse::<Algorithm>().unwrap().to_string(),
            "CSNN-0.5"
        );
        for bad in ["CSNN-0", "CSNN-1.5", "MF-0", "XYZ", "CSNN-x"] {
            assert!(bad.parse::<Algorithm>().is_err(), "{bad}");
        }
    }

    #[test]
    fn json_overrides_and_defaults() {
        let file: ConfigOverrides = serde_json::from_str(
            r#"{"suite": "synth", "algorithms": ["NN", "MF-5"], "n_trials": 3}"#,
        )
        .unwrap();
        let flags = ConfigOverrides {
            n_trials: Some(7),
            ..Default::default()
        };
        let cfg = file.merge(flags).resolve().unwrap();
        assert_eq!(cfg.n_trials, 7);
        assert_eq!(cfg.algorithms.len(), 2);
        assert_eq!(cfg.rhos, vec![0.5]);
        let echoed: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(
            serde_json::from_str::<ConfigOverrides>(r#"{"suite": "synth", "trials": 3}"#).is_err()
        );
    }

    #[test]
    fn invariants() {
        let mut cfg = ExperimentConfig::defaults(Suite::Synth);
        cfg.n_trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Suite::Synth);
        cfg.rhos.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Suite::Movielens);
        cfg.rhos = vec![1.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn alpha_and_solver_overrides() {
        let base = parse_algorithms("NN,CSNN-0.2,MF").unwrap();
        let out = apply_alpha_solver(&base, Some(&[0.3, 0.5]), None).unwrap();
        let names: Vec<String> = out.iter().map(|a| a.to_string()).collect();
        assert_eq!(names, ["NN", "MF", "CSNN-0.3", "CSNN-0.5"]);
        let out = apply_alpha_solver(&base, None, Some(StageOneSolver::Pgd)).unwrap();
        let names: Vec<String> = out.iter().map(|a| a.to_string()).collect();
        assert_eq!(names, ["PGD", "CSPGD-0.2", "MF"]);
        assert!(apply_alpha_solver(&base, Some(&[0.0]), None).is_err());
    }
}
