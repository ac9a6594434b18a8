use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use graphnet::classify::{self, ClassifierModel, ClassifierSpec, Variant};
use graphnet::graph::{laplacian, lattice_adjacency, read_edge_list, PenaltyGraph};
use graphnet::losses::{objective_value, LossKind};
use graphnet::modelsel::{self, make_cv_plan, CvOptions, GridPoint, GridSpec, Tail};
use graphnet::solver::{self, FitResult, FitSpec};
use graphnet::tensor_io::{
    self, generate_synthetic, read_mask, DesignMatrix, LatticeShape, MatrixFormat, NoiseLevel, TargetKind,
    TruthSpec,
};
use graphnet::verify;

use crate::config::RunConfig;
use crate::CliError;

#[cfg(test)]
const DATA_KEYS: &[&str] = &["x", "y", "groups", "format", "header"];
#[cfg(test)]
const GRAPH_KEYS: &[&str] = &["graph", "dims", "mask", "connect_time", "edges"];
#[cfg(test)]
const SOLVER_KEYS: &[&str] =
    &["lambda1", "lambda2", "lambda_g", "delta", "lambda1_star", "tol", "max_sweeps", "density_cap"];

pub const FIT_KEYS: &[&str] = &[
    "x", "y", "groups", "format", "header", "graph", "dims", "mask", "connect_time", "edges", "lambda1", "lambda2",
    "lambda_g", "delta", "lambda1_star", "tol", "max_sweeps", "density_cap", "variant", "path", "path_count",
    "path_ratio", "criterion", "out_dir",
];
pub const CV_KEYS: &[&str] = &[
    "x", "y", "groups", "format", "header", "graph", "dims", "mask", "connect_time", "edges", "lambda1", "lambda2",
    "lambda_g", "delta", "lambda1_star", "tol", "max_sweeps", "density_cap", "variant", "k", "n_folds", "seed",
    "per_class", "grid", "grid_lambda1", "grid_lambda_g", "grid_shift", "grid_delta", "grid_lambda1_star",
    "grid_svm_c", "out_dir",
];
pub const PREDICT_KEYS: &[&str] = &["model", "x", "y", "format", "header", "out", "downsample", "seed"];
pub const SIMULATE_KEYS: &[&str] = &[
    "dims", "mask", "n", "blobs", "radius", "amplitude", "sigma", "snr", "kind", "groups", "seed", "format", "out_dir",
];
pub const VERIFY_KEYS: &[&str] = &["instances", "seed", "tolerance", "out"];

#[cfg(test)]
fn key_sets_consistent() -> bool {
    let has = |set: &[&str], keys: &[&str]| keys.iter().all(|k| set.contains(k));
    has(FIT_KEYS, DATA_KEYS) && has(FIT_KEYS, GRAPH_KEYS) && has(FIT_KEYS, SOLVER_KEYS) && has(CV_KEYS, SOLVER_KEYS)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Lib(graphnet::Error::Io { path: path.display().to_string(), source: e })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.path("out_dir")?;
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn matrix_format(cfg: &RunConfig) -> Result<MatrixFormat, CliError> {
    match cfg.get("format").unwrap_or("csv") {
        "csv" => Ok(MatrixFormat::Csv { header: cfg.flag("header", false)? }),
        "binary" => Ok(MatrixFormat::Binary),
        other => Err(CliError::Config(format!("format must be csv or binary, got '{other}'"))),
    }
}

fn read_x(cfg: &RunConfig) -> Result<DesignMatrix, CliError> {
    let path = cfg.path("x")?;
    Ok(tensor_io::read_matrix(path, matrix_format(cfg)?)?)
}

fn read_y(cfg: &RunConfig, n: usize) -> Result<Vec<f64>, CliError> {
    let y = tensor_io::read_vector(cfg.path("y")?, cfg.flag("header", false)?)?;
    if y.len() != n {
        return Err(graphnet::Error::Shape(format!("X has {n} rows but y has {} entries", y.len())).into());
    }
    Ok(y)
}

fn lattice_shape(cfg: &RunConfig) -> Result<Option<LatticeShape>, CliError> {
    if let Some(mask) = cfg.get("mask") {
        let shape = read_mask(mask)?;
        if let Some(d) = cfg.dims("dims")? {
            if d != shape.dims() {
                return Err(CliError::Config(format!("dims {d:?} disagree with mask dims {:?}", shape.dims())));
            }
        }
        return Ok(Some(shape));
    }
    match cfg.dims("dims")? {
        Some(d) => Ok(Some(LatticeShape::full(d)?)),
        None => Ok(None),
    }
}

fn build_graph(cfg: &RunConfig, p: usize, shape: Option<&LatticeShape>) -> Result<PenaltyGraph, CliError> {
    let kind = cfg.get("graph").unwrap_or(if shape.is_some() { "lattice" } else { "identity" });
    match kind {
        "lattice" => {
            let shape = shape.ok_or_else(|| CliError::Config("graph = lattice needs 'dims' or 'mask'".into()))?;
            if shape.p() != p {
                return Err(graphnet::Error::Shape(format!("lattice has {} features but X has {p} columns", shape.p())).into());
            }
            Ok(laplacian(&lattice_adjacency(shape, cfg.flag("connect_time", true)?)?)?)
        }
        "identity" => Ok(PenaltyGraph::identity(p)),
        "zero" => Ok(PenaltyGraph::zero(p)),
        "edges" => Ok(laplacian(&read_edge_list(cfg.path("edges")?, p)?)?),
        other => Err(CliError::Config(format!("graph must be lattice, identity, zero or edges, got '{other}'"))),
    }
}

/// Penalties, tolerances and caps shared by `fit` and `cv`.
fn base_spec(cfg: &RunConfig, loss: LossKind, graph: PenaltyGraph) -> Result<FitSpec, CliError> {
    let mut spec = FitSpec::new(loss, Arc::new(graph));
    spec.lambda1 = cfg.parse_or("lambda1", 0.0)?;
    spec.lambda2 = cfg.parse_or("lambda2", 0.0)?;
    spec.lambda_g = cfg.parse_or("lambda_g", 0.0)?;
    spec.tol = cfg.parse_or("tol", spec.tol)?;
    spec.max_sweeps = cfg.parse_or("max_sweeps", spec.max_sweeps)?;
    spec.density_cap = cfg.parse_or("density_cap", spec.density_cap)?;
    Ok(spec)
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for v in values {
        let _ = writeln!(s, "{v}");
    }
    s
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum FitVariant {
    Graphnet,
    Lasso,
    ElasticNet,
    Robust,
    AdaptiveRobust,
    Svgn,
}

impl FitVariant {
    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "graphnet" => Self::Graphnet,
            "lasso" => Self::Lasso,
            "elastic-net" => Self::ElasticNet,
            "robust" => Self::Robust,
            "adaptive-robust" => Self::AdaptiveRobust,
            "svgn" => Self::Svgn,
            other => {
                return Err(CliError::Config(format!(
                    "variant must be graphnet, robust, adaptive-robust, svgn, lasso or elastic-net, got '{other}'"
                )))
            }
        })
    }
}

fn lambda_path(cfg: &RunConfig, x: &DesignMatrix, y: &[f64], spec: &FitSpec) -> Result<Vec<f64>, CliError> {
    match cfg.get("path").unwrap_or("default") {
        "default" => {
            let lmax = solver::lambda_max(x, y, spec)?;
            Ok(solver::default_path(lmax, cfg.parse_or("path_count", 90)?, cfg.parse_or("path_ratio", 0.01)?))
        }
        "integer" => Ok(solver::integer_lambda_grid()),
        _ => Ok(cfg.list::<f64>("path")?.unwrap_or_default()),
    }
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let variant = FitVariant::parse(cfg.require("variant")?)?;
    let x_raw = read_x(cfg)?;
    let y = read_y(cfg, x_raw.n())?;
    let dir = out_dir(cfg)?;
    let shape = lattice_shape(cfg)?;
    let p = x_raw.p();
    let delta = || -> Result<f64, CliError> { cfg.parse("delta")?.ok_or_else(|| CliError::Config("missing required key 'delta'".into())) };

    let loss = match variant {
        FitVariant::Graphnet | FitVariant::Lasso | FitVariant::ElasticNet => LossKind::Squared,
        FitVariant::Robust | FitVariant::AdaptiveRobust => LossKind::Huber { delta: delta()? },
        FitVariant::Svgn => LossKind::HuberizedHinge { delta: delta()? },
    };
    let graph = match variant {
        FitVariant::Lasso | FitVariant::ElasticNet => PenaltyGraph::zero(p),
        _ => build_graph(cfg, p, shape.as_ref())?,
    };
    let mut spec = base_spec(cfg, loss, graph)?;
    match variant {
        FitVariant::Lasso => {
            spec.lambda_g = 0.0;
            spec.lambda2 = 0.0;
        }
        FitVariant::ElasticNet => {
            // Ridge weight lambda2 on a zero graph shifted to the identity.
            spec.lambda_g = spec.lambda2;
        }
        _ => {}
    }

    // Standardized design and the regression target.
    let prepared = if variant == FitVariant::Svgn { Some(classify::prepare(&x_raw, &y, Variant::Svgn)?) } else { None };
    let (x, target): (DesignMatrix, Vec<f64>) = match &prepared {
        Some(pr) => (pr.x.clone(), pr.target.clone()),
        None => (x_raw.standardize()?, y.clone()),
    };

    let mut path_csv = None;
    let pilot: FitResult = if cfg.get("lambda1").is_some() {
        solver::fit(&x, &target, &spec)?
    } else {
        let path = lambda_path(cfg, &x, &target, &spec)?;
        let criterion = match cfg.get("criterion").unwrap_or("bic") {
            "aic" => Some(modelsel::Criterion::Aic),
            "bic" => Some(modelsel::Criterion::Bic),
            "none" => None,
            other => return Err(CliError::Config(format!("criterion must be aic, bic or none, got '{other}'"))),
        };
        let res = solver::fit_path(&x, &target, &spec, &path, None)?;
        if res.fits.is_empty() {
            return Err(CliError::Other("the regularization path produced no fits".into()));
        }
        let best = criterion.and_then(|c| res.best_by(c)).unwrap_or(res.fits.len() - 1);
        let mut csv = String::from("lambda1,nnz,df,aic,bic,objective,converged\n");
        for (f, c) in res.fits.iter().zip(&res.criteria) {
            let (df, aic, bic) = c.map_or(("NA".into(), "NA".into(), "NA".into()), |(d, a, b)| {
                (d.to_string(), a.to_string(), b.to_string())
            });
            let _ = writeln!(csv, "{},{},{df},{aic},{bic},{},{}", f.lambda1, f.active_set.len(), f.objective(), f.converged);
        }
        path_csv = Some(csv);
        spec.lambda1 = res.fits[best].lambda1;
        res.fits[best].clone()
    };
    let (fit, final_spec) = if variant == FitVariant::AdaptiveRobust {
        let mut s = spec.clone();
        s.lambda1 = cfg.parse_or("lambda1_star", 1.0)?;
        s.penalty_weights = Some(solver::adaptive_weights(&pilot.beta)?);
        (solver::fit_warm(&x, &target, &s, Some(&pilot))?, s)
    } else {
        (pilot, spec.clone())
    };
    let objective = objective_value(&final_spec, &x, &target, &fit.beta, None, fit.intercept)?.direct;

    let beta_raw: Vec<f64> = match &prepared {
        Some(pr) => {
            let model = pr.finish(&ClassifierSpec::new(Variant::Svgn, final_spec.clone()), &fit)?;
            model.save(dir.join("model.txt"))?;
            model.beta
        }
        None => {
            let beta = x.back_scale(&fit.beta);
            let fitted = x.matvec(&fit.beta);
            let kappa = modelsel::rescale(&target, &fitted).ok();
            let mut s = String::new();
            let _ = writeln!(s, "variant = {}", cfg.require("variant")?);
            let _ = writeln!(s, "p = {p}");
            let _ = writeln!(s, "intercept = 0");
            let _ = writeln!(s, "kappa = {}", kappa.map_or("NA".into(), |k| k.to_string()));
            s.push_str("beta\n");
            s.push_str(&join(&beta));
            write_text(&dir.join("model.txt"), &s)?;
            beta
        }
    };
    write_text(&dir.join("coefficients.txt"), &join(&beta_raw))?;
    let mut trace = String::from("sweep,objective\n");
    for (i, v) in fit.objective_trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{v}");
    }
    write_text(&dir.join("objective_trace.csv"), &trace)?;
    if let Some(csv) = path_csv {
        write_text(&dir.join("path.csv"), &csv)?;
    }
    if let Some(shape) = &shape {
        tensor_io::write_coefficient_volume(&beta_raw, shape, dir.join("coefficients_volume.txt"))?;
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "variant = {}", cfg.require("variant")?);
    let _ = writeln!(summary, "lambda1 = {}", final_spec.lambda1);
    let _ = writeln!(summary, "lambda2 = {}", final_spec.lambda2);
    let _ = writeln!(summary, "lambda_g = {}", final_spec.lambda_g);
    let _ = writeln!(summary, "nonzero = {}", fit.active_set.len());
    let _ = writeln!(summary, "objective = {objective}");
    let _ = writeln!(summary, "sweeps = {}", fit.sweeps);
    let _ = writeln!(summary, "converged = {}", fit.converged);
    let _ = writeln!(summary, "kkt_violation = {}", fit.kkt_violation);
    write_text(&dir.join("fit_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn grid_from_config(cfg: &RunConfig) -> Result<GridSpec, CliError> {
    if let Some(g) = cfg.get("grid") {
        return match g {
            "standard" => Ok(GridSpec::standard()),
            "custom" => custom_grid(cfg),
            other => Err(CliError::Config(format!("grid must be standard or custom, got '{other}'"))),
        };
    }
    custom_grid(cfg)
}

fn custom_grid(cfg: &RunConfig) -> Result<GridSpec, CliError> {
    let one = |key: &str, list: &str, default: f64| -> Result<Vec<f64>, CliError> {
        match cfg.list::<f64>(list)? {
            Some(v) => Ok(v),
            None => Ok(vec![cfg.parse_or(key, default)?]),
        }
    };
    let point = GridPoint {
        lambda1: cfg.parse_or("lambda1", 1.0)?,
        lambda_g: cfg.parse_or("lambda_g", 0.0)?,
        shift: cfg.parse_or("lambda2", 0.0)?,
        delta: cfg.parse("delta")?,
        lambda1_star: cfg.parse("lambda1_star")?,
    };
    let mut grid = GridSpec::single(point);
    grid.lambda1 = one("lambda1", "grid_lambda1", 1.0)?;
    grid.lambda_g = one("lambda_g", "grid_lambda_g", 0.0)?;
    grid.shifts = one("lambda2", "grid_shift", 0.0)?;
    if let Some(d) = cfg.list("grid_delta")? {
        grid.deltas = d;
    }
    if let Some(s) = cfg.list("grid_lambda1_star")? {
        grid.lambda1_star = s;
    }
    grid.svm_c = cfg.list("grid_svm_c")?.unwrap_or_else(|| vec![1.0]);
    Ok(grid)
}

pub fn cv(cfg: &RunConfig) -> Result<(), CliError> {
    let variant: Variant = cfg.require("variant")?.parse().map_err(|e: graphnet::Error| CliError::Config(e.to_string()))?;
    let x = read_x(cfg)?;
    let labels = read_y(cfg, x.n())?;
    let groups = tensor_io::read_groups(cfg.path("groups")?, cfg.flag("header", false)?)?;
    if groups.len() != x.n() {
        return Err(graphnet::Error::Shape(format!("X has {} rows but {} group ids", x.n(), groups.len())).into());
    }
    let dir = out_dir(cfg)?;
    let shape = lattice_shape(cfg)?;
    let graph = build_graph(cfg, x.p(), shape.as_ref())?;
    let base = base_spec(cfg, LossKind::Squared, graph)?;
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let per_class = match cfg.get("per_class") {
        None | Some("none") => None,
        Some(_) => cfg.parse("per_class")?,
    };
    let plan = make_cv_plan(&groups, cfg.parse_or("k", 1)?, cfg.parse_or("n_folds", 25)?, seed)?;
    let grid = grid_from_config(cfg)?;
    let opts = CvOptions { variant, base, per_class, seed };
    let report = modelsel::grid_search(&x, &labels, &groups, &plan, &grid, &opts)?;

    write_text(&dir.join("median_beta.txt"), &join(&report.median_beta))?;
    write_text(&dir.join("report.json"), &(report.to_json("median_beta.txt")? + "\n"))?;
    report.write_rate_surface(dir.join("rate_surface.csv"))?;
    report.aggregated_model().save(dir.join("model.txt"))?;
    if let Some(shape) = &shape {
        tensor_io::write_coefficient_volume(&report.median_beta, shape, dir.join("median_beta_volume.txt"))?;
    }
    println!("folds = {}", report.folds.len());
    println!("grid_points = {}", report.grid.len());
    println!("median_test_acc = {}", report.median_test_acc);
    let best = &report.grid[report.best].point;
    println!(
        "best = lambda1 {} lambda_g {} shift {} delta {} lambda1_star {}",
        best.lambda1,
        best.lambda_g,
        best.shift,
        best.delta.map_or("NA".into(), |d| d.to_string()),
        best.lambda1_star.map_or("NA".into(), |d| d.to_string())
    );
    Ok(())
}

/// Regression model written by `fit` for non-classifier variants.
fn read_regression_model(text: &str) -> Result<(f64, Vec<f64>), CliError> {
    let mut intercept = 0.0;
    let mut lines = text.lines();
    for line in lines.by_ref() {
        if line.trim() == "beta" {
            break;
        }
        if let Some(("intercept", v)) = line.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            intercept = v.parse().map_err(|_| graphnet::Error::Format("bad intercept in model file".into()))?;
        }
    }
    let beta = lines
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse().map_err(|_| graphnet::Error::Format(format!("bad coefficient '{l}'")).into()))
        .collect::<Result<Vec<f64>, CliError>>()?;
    Ok((intercept, beta))
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let model_path = cfg.path("model")?;
    let text = fs::read_to_string(&model_path).map_err(|e| io_err(&model_path, e))?;
    let x = read_x(cfg)?;
    let labels = if cfg.get("y").is_some() { Some(read_y(cfg, x.n())?) } else { None };
    let variant = text
        .lines()
        .find_map(|l| l.split_once('=').filter(|(k, _)| k.trim() == "variant").map(|(_, v)| v.trim().to_string()))
        .ok_or_else(|| graphnet::Error::Format("model file has no variant".into()))?;

    let mut out = String::new();
    if let Ok(_v) = variant.parse::<Variant>() {
        let model = ClassifierModel::from_text(&text)?;
        let pred = model.predict(&x)?;
        out.push_str("row,decision,label\n");
        for (i, (d, l)) in pred.decision.iter().zip(&pred.labels).enumerate() {
            let _ = writeln!(out, "{i},{d},{l}");
        }
        if let Some(truth) = labels {
            let rows: Vec<usize> = if cfg.flag("downsample", false)? {
                classify::downsample_majority(&truth, cfg.parse_or("seed", 0)?)?
            } else {
                (0..truth.len()).collect()
            };
            let p: Vec<f64> = rows.iter().map(|&i| pred.labels[i]).collect();
            let t: Vec<f64> = rows.iter().map(|&i| truth[i]).collect();
            let (acc, hits) = modelsel::score(&p, &t)?;
            let trials = t.len() as u64;
            let two = modelsel::exact_binomial_pvalue(hits, trials, 0.5, Tail::TwoSided)?;
            let one = modelsel::exact_binomial_pvalue(hits, trials, 0.5, Tail::Greater)?;
            println!("accuracy = {acc} ({hits}/{trials}) p_value = {two:.3e} p_value_one_sided = {one:.3e}");
        }
    } else {
        let (intercept, beta) = read_regression_model(&text)?;
        if beta.len() != x.p() {
            return Err(graphnet::Error::Shape(format!("model has {} features, data has {}", beta.len(), x.p())).into());
        }
        let fitted = x.matvec(&beta);
        out.push_str("row,prediction\n");
        for (i, f) in fitted.iter().enumerate() {
            let _ = writeln!(out, "{i},{}", f + intercept);
        }
        if let Some(y) = labels {
            let mse = fitted.iter().zip(&y).map(|(f, y)| (f + intercept - y).powi(2)).sum::<f64>() / y.len() as f64;
            println!("rmse = {}", mse.sqrt());
        }
    }
    match cfg.get("out") {
        Some(p) => write_text(Path::new(p), &out)?,
        None => print!("{out}"),
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let shape = match cfg.get("mask") {
        Some(m) => read_mask(m)?,
        None => LatticeShape::full(cfg.dims("dims")?.ok_or_else(|| CliError::Config("missing required key 'dims'".into()))?)?,
    };
    let noise = match (cfg.parse::<f64>("sigma")?, cfg.parse::<f64>("snr")?) {
        (Some(_), Some(_)) => return Err(CliError::Config("set only one of 'sigma' and 'snr'".into())),
        (Some(s), None) => NoiseLevel::Sigma(s),
        (None, Some(r)) => NoiseLevel::Snr(r),
        (None, None) => NoiseLevel::Sigma(1.0),
    };
    let kind = match cfg.get("kind").unwrap_or("continuous") {
        "continuous" => TargetKind::Continuous,
        "binary" => TargetKind::Binary,
        other => return Err(CliError::Config(format!("kind must be continuous or binary, got '{other}'"))),
    };
    let truth = TruthSpec {
        blobs: cfg.parse_or("blobs", 2)?,
        radius: cfg.parse_or("radius", 1)?,
        amplitude: cfg.parse_or("amplitude", 1.0)?,
        noise,
        seed: cfg.parse_or("seed", 0)?,
        kind,
        groups: cfg.parse_or("groups", 1)?,
        centers: None,
    };
    let n: usize = cfg.parse("n")?.ok_or_else(|| CliError::Config("missing required key 'n'".into()))?;
    let (x, y, t) = generate_synthetic(&shape, &truth, n)?;
    let dir = out_dir(cfg)?;
    let format = matrix_format(cfg)?;
    let xname = if matches!(format, MatrixFormat::Binary) { "x.bin" } else { "x.csv" };
    tensor_io::write_matrix(dir.join(xname), &x, format)?;
    tensor_io::write_vector(dir.join("y.csv"), &y.values)?;
    tensor_io::write_groups(dir.join("groups.csv"), &y.group_ids)?;
    tensor_io::write_vector(dir.join("beta_true.csv"), &t.beta_true)?;
    tensor_io::write_coefficient_volume(&t.beta_true, &shape, dir.join("beta_true_volume.txt"))?;
    println!("n = {} p = {} support = {} noise_sigma = {}", x.n(), x.p(), t.support.len(), t.noise_sigma);
    Ok(())
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let per_variant: usize = cfg.parse_or("instances", 5)?;
    let tolerance: f64 = cfg.parse_or("tolerance", 1e-4)?;
    let report = verify::run_verification(per_variant, cfg.parse_or("seed", 0)?, tolerance)?;
    for v in verify::VariantTag::ALL {
        let entries: Vec<_> = report.entries.iter().filter(|e| e.variant == v).collect();
        let max = entries.iter().map(|e| e.gap).fold(0.0, f64::max);
        let failed = entries.iter().filter(|e| !e.passed).count();
        println!("{:<9} comparisons {:>4}  max_gap {:.3e}  failed {}", v.name(), entries.len(), max, failed);
    }
    if let Some(out) = cfg.get("out") {
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
        write_text(Path::new(out), &(json + "\n"))?;
    }
    if !report.passed {
        return Err(CliError::Verification(format!(
            "max gap {:.3e} does not beat tolerance {tolerance:e}",
            report.max_gap
        )));
    }
    println!("verification passed (tolerance {tolerance:e})");
    Ok(())
}
