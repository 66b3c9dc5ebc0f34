use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use csmc_cli::report::MeanStd;
use csmc_cli::ExperimentReport;
use csmc_core::datasets::{gen_synthetic, SyntheticSpec};
use csmc_core::io::{read_matrix, write_matrix};
use csmc_core::metrics::{ecdf, relative_error};
use csmc_core::sampling::sample_mask;
use csmc_core::{MaskedMatrix, Rng};

fn csmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csmc"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn load_report(dir: &Path) -> ExperimentReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

/// Truth and a holed copy written as CSV.
fn holed_instance(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let m = gen_synthetic(&SyntheticSpec::new(30, 60, 2, 1)).unwrap();
    let mask = sample_mask(30, 60, 0.6, &mut Rng::new(1)).unwrap();
    let input = dir.join("holes.csv");
    let truth = dir.join("truth.csv");
    write_matrix(&input, &MaskedMatrix::new(m.clone(), mask).unwrap()).unwrap();
    write_matrix(&truth, &MaskedMatrix::fully_observed(m)).unwrap();
    (input, truth)
}

#[test]
fn exit_codes() {
    assert_eq!(code(&csmc(&["--help"])), 0);
    assert_eq!(code(&csmc(&["--version"])), 0);
    assert_eq!(code(&csmc(&["frobnicate"])), 1);
    assert_eq!(code(&csmc(&["synth-bench", "--trials", "0"])), 1);
    assert_eq!(code(&csmc(&["synth-bench", "--algorithms", "CSNN-2"])), 1);
    assert_eq!(code(&csmc(&["recommend"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let out = csmc(&[
        "recommend",
        "--ratings",
        "/nonexistent/ratings.csv",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/ratings.csv"));
    let out = csmc(&[
        "inpaint",
        "--image",
        "/nonexistent/img.png",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3,x\n").unwrap();
    assert_eq!(
        code(&csmc(&[
            "complete",
            "--input",
            path(&bad),
            "--out",
            path(dir.path())
        ])),
        2
    );
}

#[test]
fn complete_writes_matrix_and_error() {
    let dir = tempfile::tempdir().unwrap();
    let (input, truth) = holed_instance(dir.path());
    let out = csmc(&[
        "complete",
        "--input",
        path(&input),
        "--truth",
        path(&truth),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let completed = read_matrix(&dir.path().join("completed.csv")).unwrap();
    let truth = read_matrix(&truth).unwrap();
    let eps = relative_error(completed.values(), truth.values()).unwrap();
    assert!(eps < 1e-4, "eps {eps}");
    let report = load_report(dir.path());
    assert_eq!(report.trials[0].epsilon, Some(eps));
    assert!(dir.path().join("complete.json").is_file());
}

#[test]
fn diagnose_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let (input, truth) = holed_instance(dir.path());
    // A completed matrix carries solver residue around 1e-6 of the top
    // singular value, so its rank is read with a looser tolerance.
    for (file, tol) in [(&truth, "1e-10"), (&input, "1e-4")] {
        let out = csmc(&[
            "diagnose",
            "--input",
            path(file),
            "--rank-tol",
            tol,
            "--out",
            path(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("diagnose.json")).unwrap())
                .unwrap();
        let bounds = &json["bounds"];
        assert!(bounds["d_min"].as_u64().unwrap() >= 1);
        assert!(bounds["omega_min"].as_u64().unwrap() >= 1);
        assert!((bounds["success_prob"].as_f64().unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(json["coherence"]["rank"], 2);
        assert_eq!(json["completed_before_measuring"], file == &input);
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{"suite": "synth", "n_trials": 5, "rhos": [0.6], "ranks": [2],
            "algorithms": ["NN", "CSNN-0.5"], "synth": {"n1": 20, "n2": 40}}"#,
    )
    .unwrap();
    let out = csmc(&[
        "synth-bench",
        "--config",
        path(&config),
        "--trials",
        "2",
        "--alpha",
        "0.4,0.6",
        "--seed",
        "7",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = load_report(dir.path());
    let cfg = &report.config;
    assert_eq!((cfg.n_trials, cfg.seed, cfg.synth.n1), (2, 7, 20));
    let names: Vec<String> = cfg.algorithms.iter().map(|a| a.to_string()).collect();
    assert_eq!(names, ["NN", "CSNN-0.4", "CSNN-0.6"]);
    assert_eq!(report.trials.len(), 6);

    let out = csmc(&["recommend", "--config", path(&config)]);
    assert_eq!(code(&out), 1);
    fs::write(&config, r#"{"suite": "synth", "trails": 3}"#).unwrap();
    assert_eq!(code(&csmc(&["synth-bench", "--config", path(&config)])), 1);
}

#[test]
fn report_files_agree_with_trials() {
    let dir = tempfile::tempdir().unwrap();
    let out = csmc(&[
        "synth-bench",
        "--n1",
        "20",
        "--n2",
        "50",
        "--rank",
        "2",
        "--rho",
        "0.5,0.8",
        "--trials",
        "4",
        "--algorithms",
        "NN,CSNN-0.5,MF",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = load_report(dir.path());
    assert_eq!(report.trials.len(), 2 * 4 * 3);

    let csv = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    for agg in &report.aggregates {
        let eps: Vec<f64> = rows
            .iter()
            .filter(|r| r[1] == agg.algorithm && r[3].parse::<f64>().unwrap() == agg.rho)
            .map(|r| r[5].parse().unwrap())
            .collect();
        assert_eq!(eps.len(), agg.trials);
        let n = eps.len() as f64;
        let mean = eps.iter().sum::<f64>() / n;
        let std = (eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let MeanStd { mean: m, std: s } = agg.epsilon.unwrap();
        assert!((m - mean).abs() <= 1e-12 && (s - std).abs() <= 1e-12);

        let name = format!("ecdf_{}_{}_2.csv", agg.algorithm, agg.rho);
        let curve = fs::read_to_string(dir.path().join(name)).unwrap();
        for line in curve.lines().skip(1) {
            let (a, f) = line.split_once(',').unwrap();
            assert_eq!(
                f.parse::<f64>().unwrap(),
                ecdf(&eps, a.parse().unwrap()).unwrap()
            );
        }
    }
    let runtimes = fs::read_to_string(dir.path().join("runtimes.csv")).unwrap();
    assert_eq!(runtimes.lines().count(), 1 + report.trials.len());
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + report.aggregates.len());
}

#[test]
fn inpaint_and_recommend_record_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("img.pgm");
    let m =
        csmc_core::DenseMatrix::from_fn(20, 30, |i, j| 0.5 + 0.3 * ((i + j) as f64 * 0.2).sin());
    csmc_core::datasets::save_image_gray(&m, &image).unwrap();
    let out = csmc(&[
        "inpaint",
        "--image",
        path(&image),
        "--rho",
        "0.6",
        "--trials",
        "2",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = load_report(dir.path());
    assert!(report
        .trials
        .iter()
        .all(|t| t.extra.contains_key("snr") && t.rank.is_none()));
    assert!(dir
        .path()
        .join("reconstructions/img0_NN_rho0.6.png")
        .is_file());

    let ratings = dir.path().join("ratings.csv");
    let mut text = String::from("userId,movieId,rating,timestamp\n");
    for u in 1..=12 {
        for i in 1..=15 {
            if (u * 7 + i * 3) % 4 != 0 {
                text.push_str(&format!("{u},{i},{},0\n", 1 + (u + i) % 5));
            }
        }
    }
    fs::write(&ratings, text).unwrap();
    let out = csmc(&[
        "recommend",
        "--ratings",
        path(&ratings),
        "--algorithms",
        "NN,CSNN-0.5,MF",
        "--rank",
        "2",
        "--trials",
        "2",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = load_report(dir.path());
    assert_eq!(report.trials.len(), 6);
    assert!(report
        .trials
        .iter()
        .all(|t| t.extra.contains_key("nmae") && t.extra.contains_key("hr")));
    assert!(dir.path().join("provenance.json").is_file());
    let header = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(header
        .lines()
        .next()
        .unwrap()
        .ends_with("nmae_mean,nmae_std,hr_mean,hr_std"));
}

#[test]
fn failed_trials_are_recorded() {
    // MF-40 exceeds min(n1, n2) = 20, so its trials fail and NN still runs.
    let dir = tempfile::tempdir().unwrap();
    let out = csmc(&[
        "synth-bench",
        "--n1",
        "20",
        "--n2",
        "30",
        "--rank",
        "2",
        "--trials",
        "2",
        "--algorithms",
        "NN,MF-40",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = load_report(dir.path());
    let mf: Vec<_> = report
        .trials
        .iter()
        .filter(|t| t.algorithm == "MF-40")
        .collect();
    assert!(mf.iter().all(|t| t.epsilon.is_none() && t.error.is_some()));
    assert!(report
        .trials
        .iter()
        .filter(|t| t.algorithm == "NN")
        .all(|t| t.epsilon.is_some()));
    let agg = report
        .aggregates
        .iter()
        .find(|a| a.algorithm == "MF-40")
        .unwrap();
    assert_eq!((agg.failed, agg.epsilon), (2, None));
}
