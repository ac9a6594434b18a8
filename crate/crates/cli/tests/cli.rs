use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use graphnet::classify::{ClassifierModel, Variant};
use graphnet::graph::{laplacian, lattice_adjacency};
use graphnet::losses::{objective_value, LossKind};
use graphnet::solver::FitSpec;
use graphnet::tensor_io::{read_matrix, read_vector, write_matrix, write_vector, DesignMatrix, LatticeShape, MatrixFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphnet")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn set(k: &str, v: impl AsRef<Path>) -> String {
    format!("{k}={}", v.as_ref().display())
}

/// Simulate a small lattice dataset into `dir/sim`.
fn simulate(dir: &Path, kind: &str) -> PathBuf {
    let out = dir.join("sim");
    ok(&[
        "simulate", "--set", "dims=4,4,3,2", "--set", "n=72", "--set", &format!("kind={kind}"), "--set",
        "groups=6", "--set", "seed=5", "--set", &set("out_dir", &out),
    ]);
    out
}

fn summary_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.split_once('=').filter(|(k, _)| k.trim() == key).map(|(_, v)| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("no {key} in summary"))
}

#[test]
fn missing_data_path_exits_2_naming_the_key() {
    let o = run(&["fit", "--set", "variant=graphnet"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("'x'"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn unknown_key_is_a_config_error() {
    let o = run(&["simulate", "--set", "colour=blue"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(&cfg, format!("dims = 4,4,3\nn = 10\nseed = 1\nout_dir = {}\n", dir.path().join("a").display())).unwrap();
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "n=12"]);
    let y = read_vector(dir.path().join("a/y.csv"), false).unwrap();
    assert_eq!(y.len(), 12);
}

#[test]
fn fit_reports_recomputable_objective() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "continuous");
    let out = dir.path().join("fit");
    let stdout = ok(&[
        "fit", "--set", &set("x", sim.join("x.csv")), "--set", &set("y", sim.join("y.csv")), "--set",
        "variant=graphnet", "--set", "dims=4,4,3,2", "--set", "lambda_g=3", "--set", "path_count=30",
        "--set", &set("out_dir", &out),
    ]);
    for f in ["model.txt", "coefficients.txt", "objective_trace.csv", "path.csv", "coefficients_volume.txt", "fit_summary.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let reported = summary_value(&stdout, "objective");
    let lambda1 = summary_value(&stdout, "lambda1");

    let raw = read_matrix(sim.join("x.csv"), MatrixFormat::Csv { header: false }).unwrap();
    let y = read_vector(sim.join("y.csv"), false).unwrap();
    let x = raw.standardize().unwrap();
    let beta_raw = read_vector(out.join("coefficients.txt"), false).unwrap();
    let norms = x.column_norms().to_vec();
    let beta: Vec<f64> = beta_raw.iter().zip(&norms).map(|(b, s)| b * s).collect();
    let shape = LatticeShape::full([4, 4, 3, 2]).unwrap();
    let g = Arc::new(laplacian(&lattice_adjacency(&shape, true).unwrap()).unwrap());
    let mut spec = FitSpec::new(LossKind::Squared, g);
    spec.lambda1 = lambda1;
    spec.lambda_g = 3.0;
    let recomputed = objective_value(&spec, &x, &y, &beta, None, 0.0).unwrap().direct;
    assert!((recomputed - reported).abs() <= 1e-9 * reported.abs(), "{recomputed} vs {reported}");
}

#[test]
fn lasso_equals_graphnet_without_graph_weight() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "continuous");
    let fit = |variant: &str, out: &str| {
        ok(&[
            "fit", "--set", &set("x", sim.join("x.csv")), "--set", &set("y", sim.join("y.csv")), "--set",
            &format!("variant={variant}"), "--set", "dims=4,4,3,2", "--set", "lambda_g=0", "--set", "lambda1=0.5",
            "--set", &set("out_dir", dir.path().join(out)),
        ]);
        std::fs::read(dir.path().join(out).join("coefficients.txt")).unwrap()
    };
    assert_eq!(fit("lasso", "l"), fit("graphnet", "g"));
}

#[test]
fn every_regression_variant_runs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "continuous");
    for v in ["graphnet", "robust", "adaptive-robust", "lasso", "elastic-net"] {
        ok(&[
            "fit", "--set", &set("x", sim.join("x.csv")), "--set", &set("y", sim.join("y.csv")), "--set",
            &format!("variant={v}"), "--set", "dims=4,4,3,2", "--set", "lambda_g=1", "--set", "lambda2=0.5",
            "--set", "delta=1", "--set", "path_count=15", "--set", &set("out_dir", dir.path().join(v)),
        ]);
        let beta = read_vector(dir.path().join(v).join("coefficients.txt"), false).unwrap();
        assert_eq!(beta.len(), 96, "{v}");
    }
}

#[test]
fn svgn_model_reproduces_training_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "binary");
    let out = dir.path().join("svgn");
    ok(&[
        "fit", "--set", &set("x", sim.join("x.csv")), "--set", &set("y", sim.join("y.csv")), "--set", "variant=svgn",
        "--set", "dims=4,4,3,2", "--set", "lambda_g=1", "--set", "lambda1=0.5", "--set", "delta=0.5", "--set",
        &set("out_dir", &out),
    ]);
    let model = ClassifierModel::load(out.join("model.txt")).unwrap();
    let stdout = ok(&[
        "predict", "--model", out.join("model.txt").to_str().unwrap(), "--data", sim.join("x.csv").to_str().unwrap(),
        "--labels", sim.join("y.csv").to_str().unwrap(), "--set", &set("out", dir.path().join("pred.csv")),
    ]);
    assert_eq!(summary_value(stdout.split_whitespace().take(3).collect::<Vec<_>>().join(" ").as_str(), "accuracy"), model.train_accuracy);
    let rows = std::fs::read_to_string(dir.path().join("pred.csv")).unwrap();
    assert_eq!(rows.lines().count(), 73);
}

fn write_threshold_model(path: &Path) {
    let model = ClassifierModel {
        variant: Variant::Svgn,
        beta: vec![1.0],
        threshold: 0.0,
        intercept: 0.0,
        train_accuracy: 1.0,
        means: vec![0.0],
        norms: vec![1.0],
        beta_std: vec![1.0],
    };
    model.save(path).unwrap();
}

#[test]
fn predict_prints_exact_binomial_pvalue() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    write_threshold_model(&model);
    // 322 rows, the first 216 labelled to match the sign of x.
    let x: Vec<f64> = (0..322).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| if i < 216 { *v } else { -v }).collect();
    write_matrix(dir.path().join("x.csv"), &DesignMatrix::from_row_major(322, 1, &x).unwrap(), MatrixFormat::Csv { header: false }).unwrap();
    write_vector(dir.path().join("y.csv"), &y).unwrap();
    let stdout = ok(&[
        "predict", "--model", model.to_str().unwrap(), "--data", dir.path().join("x.csv").to_str().unwrap(), "--labels",
        dir.path().join("y.csv").to_str().unwrap(), "--set", &set("out", dir.path().join("p.csv")),
    ]);
    assert!(stdout.contains("(216/322)"), "{stdout}");
    let p: f64 = stdout.split("p_value = ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((p / 8.6e-10 - 1.0).abs() < 0.01, "{p}");
}

#[test]
fn null_model_on_random_labels_is_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    write_threshold_model(&model);
    let (mut acc, mut pv) = (0.0, 0.0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        write_matrix(dir.path().join("x.csv"), &DesignMatrix::from_row_major(n, 1, &x).unwrap(), MatrixFormat::Csv { header: false }).unwrap();
        write_vector(dir.path().join("y.csv"), &y).unwrap();
        let stdout = ok(&[
            "predict", "--model", model.to_str().unwrap(), "--data", dir.path().join("x.csv").to_str().unwrap(),
            "--labels", dir.path().join("y.csv").to_str().unwrap(), "--set", &set("out", dir.path().join("p.csv")),
        ]);
        acc += summary_value(stdout.split_whitespace().take(3).collect::<Vec<_>>().join(" ").as_str(), "accuracy");
        pv += stdout.split("p_value = ").nth(1).unwrap().split_whitespace().next().unwrap().parse::<f64>().unwrap();
    }
    let (acc, pv) = (acc / 20.0, pv / 20.0);
    assert!((acc - 0.5).abs() <= 0.05, "mean accuracy {acc}");
    assert!((0.3..=0.8).contains(&pv), "mean p {pv}");
}

#[test]
fn predict_dimension_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    write_threshold_model(&model);
    write_matrix(dir.path().join("x.csv"), &DesignMatrix::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap(), MatrixFormat::Csv { header: false }).unwrap();
    let o = run(&["predict", "--model", model.to_str().unwrap(), "--data", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn cv_leave_one_group_out_has_one_fold_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "binary");
    let out = dir.path().join("cv");
    ok(&[
        "cv", "--set", &set("x", sim.join("x.csv")), "--set", &set("y", sim.join("y.csv")), "--set",
        &set("groups", sim.join("groups.csv")), "--set", "variant=spda-graphnet", "--set", "dims=4,4,3,2",
        "--set", "grid_lambda1=2,1", "--set", "grid_lambda_g=0,1", "--set", "k=1", "--set", &set("out_dir", &out),
    ]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["fold"].as_array().unwrap().len(), 6);
    assert_eq!(report["grid"].as_array().unwrap().len(), 4);
    let surface = std::fs::read_to_string(out.join("rate_surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 5);
    assert_eq!(read_vector(out.join("median_beta.txt"), false).unwrap().len(), 96);
}

#[test]
fn verify_passes_and_fails_with_zero_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    let stdout = ok(&["verify", "--set", "instances=4", "--set", &set("out", &out)]);
    for v in ["graphnet", "robust", "adaptive", "svgn"] {
        assert!(stdout.contains(v), "{stdout}");
    }
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(rep["max_gap"].as_f64().unwrap() < 1e-4);
    let o = run(&["verify", "--set", "instances=1", "--set", "tolerance=0"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn simulate_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let go = |o: &str| {
        ok(&["simulate", "--threads", "1", "--set", "dims=3,3,3,2", "--set", "n=20", "--set", "seed=3", "--set", "format=binary", "--set", &set("out_dir", dir.path().join(o))]);
        std::fs::read(dir.path().join(o).join("x.bin")).unwrap()
    };
    assert_eq!(go("a"), go("b"));
}
