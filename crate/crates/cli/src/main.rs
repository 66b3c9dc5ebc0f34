use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use csmc_cli::config::{apply_alpha_solver, parse_algorithms, parse_grid};
use csmc_cli::report::ExperimentReport;
use csmc_cli::{run_and_write, CliError, ConfigOverrides, ExperimentConfig, Suite};
use csmc_core::StageOneSolver;

#[derive(Parser, Debug)]
#[command(
    name = "csmc",
    version,
    about = "Columns-selected matrix completion benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Comma-separated algorithm list, e.g. NN,CSNN-0.2,MF-5.
    #[arg(long, global = true, value_name = "LIST")]
    algorithms: Option<String>,
    /// Comma-separated column fractions; replaces the CS entries.
    #[arg(long, global = true, value_name = "LIST")]
    alpha: Option<String>,
    /// Comma-separated observed (or training) fractions.
    #[arg(long, global = true, value_name = "LIST")]
    rho: Option<String>,
    /// Comma-separated ranks.
    #[arg(long, global = true, value_name = "LIST")]
    rank: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// First-stage solver for NN/CS entries.
    #[arg(long, global = true, value_parser = ["pgd", "nn"])]
    solver: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Complete one matrix file (CSV with nan holes or MatrixMarket).
    Complete {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Fully observed ground truth, for reporting the relative error.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output CSV; defaults to <out>/completed.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Synthetic low-rank recovery benchmark.
    SynthBench {
        #[arg(long)]
        n1: Option<usize>,
        #[arg(long)]
        n2: Option<usize>,
    },
    /// Rating prediction on a MovieLens ratings.csv.
    Recommend {
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Grayscale image inpainting.
    Inpaint {
        /// Image file; repeat for several images.
        #[arg(long = "image")]
        images: Vec<PathBuf>,
    },
    /// Coherence, condition number and sample-size bounds of a matrix.
    Diagnose {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Confidence parameter of the bounds.
        #[arg(long)]
        gamma: Option<f64>,
        /// Singular values at or below this fraction of the largest are
        /// treated as zero. Loosen it for matrices that must be completed
        /// first.
        #[arg(long)]
        rank_tol: Option<f64>,
    },
}

impl Command {
    fn suite(&self) -> Suite {
        match self {
            Command::Complete { .. } => Suite::Complete,
            Command::SynthBench { .. } => Suite::Synth,
            Command::Recommend { .. } => Suite::Movielens,
            Command::Inpaint { .. } => Suite::Inpaint,
            Command::Diagnose { .. } => Suite::Diagnose,
        }
    }
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, CliError> {
    let suite = cli.command.suite();
    let file = match &cli.common.config {
        Some(path) => ConfigOverrides::from_json_file(path)?,
        None => ConfigOverrides::default(),
    };
    if let Some(s) = file.suite.filter(|s| *s != suite) {
        return Err(CliError::Usage(format!(
            "config file is for the {s} suite, command runs {suite}"
        )));
    }
    let c = cli.common;
    let mut flags = ConfigOverrides {
        suite: Some(suite),
        rhos: c.rho.as_deref().map(|s| parse_grid(s, "rho")).transpose()?,
        ranks: c
            .rank
            .as_deref()
            .map(|s| parse_grid(s, "rank"))
            .transpose()?,
        n_trials: c.trials,
        seed: c.seed,
        out: c.out,
        threads: c.threads,
        ..Default::default()
    };
    let mut d = file.clone().merge(flags.clone()).fill_defaults()?;
    match cli.command {
        Command::Complete {
            input,
            truth,
            output,
        } => {
            let cfg = &mut d.complete;
            cfg.input = input.or(cfg.input.take());
            cfg.truth = truth.or(cfg.truth.take());
            cfg.output = output.or(cfg.output.take());
            flags.complete = Some(d.complete);
        }
        Command::SynthBench { n1, n2 } => {
            let cfg = &mut d.synth;
            cfg.n1 = n1.unwrap_or(cfg.n1);
            cfg.n2 = n2.unwrap_or(cfg.n2);
            flags.synth = Some(d.synth);
        }
        Command::Recommend { ratings } => {
            d.movielens.ratings = ratings.or(d.movielens.ratings.take());
            flags.movielens = Some(d.movielens);
        }
        Command::Inpaint { images } => {
            if !images.is_empty() {
                d.inpaint.images = images;
            }
            flags.inpaint = Some(d.inpaint);
        }
        Command::Diagnose {
            input,
            gamma,
            rank_tol,
        } => {
            d.diagnose.input = input.or(d.diagnose.input.take());
            d.diagnose.gamma = gamma.unwrap_or(d.diagnose.gamma);
            d.diagnose.rank_tol = rank_tol.unwrap_or(d.diagnose.rank_tol);
            flags.diagnose = Some(d.diagnose);
        }
    }

    let solver = match c.solver.as_deref() {
        Some("pgd") => Some(StageOneSolver::Pgd),
        Some("nn") => Some(StageOneSolver::Nn),
        _ => None,
    };
    let alphas: Option<Vec<f64>> = c
        .alpha
        .as_deref()
        .map(|s| parse_grid(s, "alpha"))
        .transpose()?;
    if c.algorithms.is_some() || alphas.is_some() || solver.is_some() {
        let algorithms = match c.algorithms.as_deref() {
            Some(s) => parse_algorithms(s)?,
            None => d.algorithms,
        };
        flags.algorithms = Some(apply_alpha_solver(&algorithms, alphas.as_deref(), solver)?);
    }
    file.merge(flags).resolve()
}

fn print_summary(report: &ExperimentReport) {
    for (key, value) in &report.details {
        if key == "diagnose" || key == "complete" {
            println!(
                "{}",
                serde_json::to_string_pretty(value).unwrap_or_default()
            );
        }
    }
    if report.aggregates.is_empty() {
        return;
    }
    println!(
        "{:<12} {:>6} {:>5} {:>7} {:>12} {:>12} {:>10}",
        "algorithm", "rho", "rank", "trials", "eps_mean", "eps_std", "time_s"
    );
    for a in &report.aggregates {
        let eps = a.epsilon.map_or(("-".into(), "-".into()), |m| {
            (format!("{:.4e}", m.mean), format!("{:.2e}", m.std))
        });
        let time = a.elapsed_s.map_or("-".into(), |m| format!("{:.3}", m.mean));
        let rank = a.rank.map_or("-".into(), |r| r.to_string());
        println!(
            "{:<12} {:>6} {:>5} {:>7} {:>12} {:>12} {:>10}",
            a.algorithm,
            a.rho,
            rank,
            format!("{}/{}", a.trials - a.failed, a.trials),
            eps.0,
            eps.1,
            time
        );
        for (k, m) in &a.metrics {
            println!("{:<12} {k} = {:.4} +/- {:.4}", "", m.mean, m.std);
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = build_config(cli).and_then(|cfg| run_and_write(&cfg));
    match result {
        Ok((report, written)) => {
            print_summary(&report);
            let failed: usize = report.aggregates.iter().map(|a| a.failed).sum();
            if failed > 0 {
                eprintln!("{failed} trial(s) failed; see trials.csv");
            }
            if let Some(first) = written.first() {
                eprintln!(
                    "wrote {} files to {}",
                    written.len(),
                    first.parent().unwrap_or(first).display()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
