use infbeta_cli::dataset::ModelFormula;
use infbeta_cli::diagnose::{cmd_diagnose, DiagnoseKind, DiagnoseRequest, Diagnosis};
use infbeta_cli::fit::{cmd_fit, AlphaArg, FitArtifact, FitRequest};
use infbeta_cli::generate::sample_csv;
use infbeta_cli::simulate::{cmd_simulate, SimulateOverrides};
use robust_infbeta::simulation::{scenario_sample, ScenarioSpec};
use robust_infbeta::{EstimatorKind, Execution, Inflation, LinkSpec};
use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

const FORMULA: &str = "y ~ s1 + s2 | x1 | 1";

fn clean_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let spec = ScenarioSpec::scenario(0, n, 1, seed).unwrap();
    let obs = scenario_sample(&spec, 0).unwrap();
    let path = dir.join("clean.csv");
    std::fs::write(&path, sample_csv(&obs).unwrap()).unwrap();
    path
}

fn request(csv: PathBuf, out: PathBuf, estimators: &[EstimatorKind]) -> FitRequest {
    FitRequest {
        csv,
        formula: ModelFormula::parse(FORMULA, Inflation::Zero, LinkSpec::default()).unwrap(),
        estimators: estimators.to_vec(),
        alpha_disc: AlphaArg::Auto,
        alpha_cont: AlphaArg::Auto,
        clamp: None,
        drop_rows: vec![],
        seed: Some(11),
        out,
    }
}

fn infbeta(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_infbeta")).args(args).output().unwrap()
}

#[test]
fn mle_recovers_the_truth_within_three_se() {
    let dir = TempDir::new().unwrap();
    let csv = clean_csv(dir.path(), 400, 5);
    let art = cmd_fit(&request(csv, dir.path().join("out"), &[EstimatorKind::Mle])).unwrap();
    let f = &art.fits[0];
    let truth = [0.0, 2.0, 2.0, -1.8, -2.0, 4.5];
    for (j, (&est, &t)) in f.params.to_vec().iter().zip(&truth).enumerate() {
        let se = f.covariance.se[j];
        assert!((est - t).abs() < 3.0 * se, "coefficient {j}: {est} vs {t} (se {se})");
    }
    for name in ["fit.json", "coefficients.csv", "weights.csv", "report.txt"] {
        assert!(dir.path().join("out").join(name).exists(), "{name} missing");
    }
}

#[test]
fn auto_alpha_on_clean_data_reproduces_mle() {
    let dir = TempDir::new().unwrap();
    let csv = clean_csv(dir.path(), 200, 8);
    let art = cmd_fit(&request(csv, dir.path().join("out"), &EstimatorKind::ALL)).unwrap();
    let mle = art.fits[0].params.to_vec();
    for f in &art.fits[1..] {
        assert_eq!((f.alpha.alpha_disc, f.alpha.alpha_cont), (0.0, 0.0), "{}", f.estimator);
        for (a, b) in f.params.to_vec().iter().zip(&mle) {
            assert!((a - b).abs() < 1e-6, "{}: {a} vs {b}", f.estimator);
        }
    }
}

#[test]
fn dropped_rows_leave_the_rest_untouched() {
    let dir = TempDir::new().unwrap();
    let csv = clean_csv(dir.path(), 120, 2);
    let full = cmd_fit(&request(csv.clone(), dir.path().join("a"), &[EstimatorKind::Mle])).unwrap();
    let mut req = request(csv, dir.path().join("b"), &[EstimatorKind::Mle]);
    req.drop_rows = vec![39];
    let cut = cmd_fit(&req).unwrap();
    assert_eq!(cut.data.len(), full.data.len() - 1);
    assert!(!cut.data.rows.contains(&39));
    for (name, col) in &cut.data.columns {
        let mut expected = full.data.columns[name].clone();
        expected.remove(38);
        assert_eq!(col, &expected);
    }
    assert_ne!(cut.fits[0].params, full.fits[0].params);
    assert!(std::fs::read_to_string(dir.path().join("b/report.txt")).unwrap().contains("dropped rows: #39"));
}

#[test]
fn exit_codes_are_stable() {
    let dir = TempDir::new().unwrap();
    let csv = clean_csv(dir.path(), 100, 3);
    let out = dir.path().join("out");
    let ok = infbeta(&["fit", csv.to_str().unwrap(), "--formula", FORMULA, "--estimator", "mle", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let bad = infbeta(&["fit", csv.to_str().unwrap(), "--formula", "y ~ nope", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nope"));

    let missing = infbeta(&["diagnose", dir.path().join("none.json").to_str().unwrap(), "--kind", "weights"]);
    assert_eq!(missing.status.code(), Some(2));

    // Zeros exactly when x < 0: the discrete part diverges.
    let mut text = String::from("y,x\n");
    for i in 0..60 {
        let x = -1.0 + 2.0 * (i as f64 + 0.5) / 60.0;
        let y = if x < 0.0 { 0.0 } else { 0.2 + 0.5 * ((i * 37) % 11) as f64 / 11.0 };
        text.push_str(&format!("{y},{x}\n"));
    }
    let sep = dir.path().join("sep.csv");
    std::fs::write(&sep, text).unwrap();
    let diverge = infbeta(&["fit", sep.to_str().unwrap(), "--formula", "y ~ x", "--estimator", "mle", "--out", out.to_str().unwrap()]);
    assert_eq!(diverge.status.code(), Some(3), "{}", String::from_utf8_lossy(&diverge.stderr));
}

#[test]
fn artifact_round_trip_feeds_diagnose() {
    let dir = TempDir::new().unwrap();
    let csv = clean_csv(dir.path(), 150, 4);
    let art = cmd_fit(&request(csv, dir.path().join("out"), &EstimatorKind::ALL)).unwrap();
    let path = dir.path().join("out/fit.json");
    let loaded = FitArtifact::load(&path).unwrap();
    assert_eq!(loaded, art);
    assert_eq!(loaded.seed, 11);

    let req = |out: &str| DiagnoseRequest {
        artifact: path.clone(),
        kind: DiagnoseKind::Residuals,
        estimator: Some(EstimatorKind::Mlme),
        seed: None,
        n_sim: 20,
        band: 0.95,
        refit: false,
        svg: false,
        out: dir.path().join(out),
    };
    cmd_diagnose(&req("r1"), Execution::Parallel).unwrap();
    cmd_diagnose(&req("r2"), Execution::Parallel).unwrap();
    let a = std::fs::read(dir.path().join("r1/residuals_mlme.csv")).unwrap();
    let b = std::fs::read(dir.path().join("r2/residuals_mlme.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 151);
}

#[test]
fn envelope_covers_a_well_specified_fit() {
    let dir = TempDir::new().unwrap();
    let csv = clean_csv(dir.path(), 200, 6);
    cmd_fit(&request(csv, dir.path().join("out"), &[EstimatorKind::Mle])).unwrap();
    let req = DiagnoseRequest {
        artifact: dir.path().join("out/fit.json"),
        kind: DiagnoseKind::Envelope,
        estimator: None,
        seed: Some(99),
        n_sim: 100,
        band: 0.95,
        refit: false,
        svg: true,
        out: dir.path().join("env"),
    };
    let Diagnosis::Envelope(env) = cmd_diagnose(&req, Execution::Parallel).unwrap() else {
        panic!("expected an envelope");
    };
    assert!(env.coverage() >= 0.9, "coverage {}", env.coverage());
    let again = cmd_diagnose(&req, Execution::Sequential).unwrap();
    let Diagnosis::Envelope(env2) = again else { unreachable!() };
    assert_eq!(env, env2);
    let svg = std::fs::read_to_string(dir.path().join("env/envelope_mle.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn weights_are_sorted_and_name_the_outlier() {
    let dir = TempDir::new().unwrap();
    let spec = ScenarioSpec::scenario(1, 100, 1, 7).unwrap();
    let obs = scenario_sample(&spec, 0).unwrap();
    let csv = dir.path().join("s1.csv");
    std::fs::write(&csv, sample_csv(&obs).unwrap()).unwrap();
    cmd_fit(&request(csv, dir.path().join("out"), &[EstimatorKind::Mlse])).unwrap();
    let req = DiagnoseRequest {
        artifact: dir.path().join("out/fit.json"),
        kind: DiagnoseKind::Weights,
        estimator: None,
        seed: None,
        n_sim: 0,
        band: 0.95,
        refit: false,
        svg: false,
        out: dir.path().join("w"),
    };
    let Diagnosis::Weights { lowest_row } = cmd_diagnose(&req, Execution::Sequential).unwrap() else {
        panic!("expected weights");
    };
    let mut rdr = csv::Reader::from_path(dir.path().join("w/weights_mlse.csv")).unwrap();
    let rows: Vec<(usize, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].parse().unwrap(), r[3].parse().unwrap())
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[0].1 >= w[1].1));
    assert_eq!(rows[0].1, 1.0);
    let (row, w) = lowest_row.unwrap();
    assert_eq!(rows.last().unwrap(), &(row, w));
    assert!(w < 0.5, "smallest weight {w}");
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn single_replication_marks_sd_missing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_scenario(dir.path(), "n = 60\nreps = 1\nseed = 3\n");
    let s = cmd_simulate(&cfg, &dir.path().join("out"), &SimulateOverrides::default(), Execution::Sequential).unwrap();
    assert_eq!(s.spec.reps, 1);
    let text = std::fs::read_to_string(dir.path().join("out/bias_rmse.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').nth(6), Some("NA"), "{line}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_scenario(dir.path(), "n = 80\nreps = 6\nseed = 17\ncontaminate_continuous = true\n");
    let ov = SimulateOverrides::default();
    cmd_simulate(&cfg, &dir.path().join("a"), &ov, Execution::Parallel).unwrap();
    cmd_simulate(&cfg, &dir.path().join("b"), &ov, Execution::Sequential).unwrap();
    for name in ["bias_rmse.csv", "alpha.csv", "tmse.csv", "levels.csv", "summary.json", "report.txt"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn bad_scenario_fields_are_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_scenario(dir.path(), "n = 80\nreps = 6\nrate = 0.7\n");
    let out = infbeta(&["simulate", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rate"));

    let cfg = write_scenario(dir.path(), "n = 80\nrepz = 6\n");
    let out = infbeta(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("repz"));
}

#[test]
fn bundled_scenario_generates_a_sample() {
    let dir = TempDir::new().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/scenario1-desk.toml");
    let out = dir.path().join("sample.csv");
    let run = infbeta(&["generate", cfg, "--out", out.to_str().unwrap(), "--rep", "2"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().next(), Some("y,s1,s2,x1"));
    assert_eq!(text.lines().count(), 101);
}
