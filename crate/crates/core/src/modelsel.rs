//! Model selection: effective degrees of freedom, information criteria,
//! coefficient rescaling, grouped cross-validation with grid search, median
//! aggregation across folds and exact binomial significance.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::classify::{self, accuracy, balanced_resample, ClassifierSpec, Variant};
use crate::error::{Error, Result};
use crate::graph::PenaltyGraph;
use crate::losses::{objective_value, LossKind};
use crate::par;
use crate::solver::{FitResult, FitSpec};
use crate::tensor_io::DesignMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    pub fn pick(self, aic: f64, bic: f64) -> f64 {
        match self {
            Criterion::Aic => aic,
            Criterion::Bic => bic,
        }
    }
}

/// `tr(X_A (X_AᵀX_A + λG G_A)⁻¹ X_Aᵀ)` from dense blocks.
pub fn effective_df_dense(xa: &DMatrix<f64>, ga: &DMatrix<f64>, lambda_g: f64) -> Result<f64> {
    let k = xa.ncols();
    if ga.nrows() != k || ga.ncols() != k {
        return Err(Error::Shape(format!("graph block is {}x{}, expected {k}x{k}", ga.nrows(), ga.ncols())));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let gram = xa.transpose() * xa;
    let system = &gram + ga * lambda_g;
    // tr(X A⁻¹ Xᵀ) = tr(A⁻¹ XᵀX).
    let singular = || Error::Numeric("regularized Gram matrix of the active set is singular".into());
    let scale = system.diagonal().amax();
    let solved = match system.clone().cholesky() {
        Some(ch) => {
            let d = ch.l_dirty().diagonal();
            if d.min().powi(2) <= 1e-13 * scale {
                return Err(singular());
            }
            ch.solve(&gram)
        }
        None => {
            let lu = system.lu();
            if lu.u().diagonal().amin() <= 1e-13 * scale {
                return Err(singular());
            }
            lu.solve(&gram).ok_or_else(singular)?
        }
    };
    let df = solved.trace();
    if !df.is_finite() {
        return Err(Error::Numeric("effective degrees of freedom are not finite".into()));
    }
    Ok(df)
}

/// Effective degrees of freedom of a fit on `active`; `g` must already carry
/// its diagonal shift.
pub fn effective_df(x: &DesignMatrix, active: &[usize], g: &PenaltyGraph, lambda_g: f64) -> Result<f64> {
    if g.size() != x.p() {
        return Err(Error::Shape(format!("graph has size {} but X has {} columns", g.size(), x.p())));
    }
    let xa = DMatrix::from_fn(x.n(), active.len(), |i, k| x.column(active[k])[i]);
    effective_df_dense(&xa, &g.restrict_dense(active), lambda_g)
}

/// Gaussian-likelihood `(AIC, BIC)`.
pub fn information_criteria(rss: f64, df: f64, n: usize) -> Result<(f64, f64)> {
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(Error::Numeric(format!("residual sum of squares must be positive, got {rss}")));
    }
    if !(df >= 0.0) || n == 0 {
        return Err(Error::Parameter(format!("need df >= 0 and n > 0, got df = {df}, n = {n}")));
    }
    let nf = n as f64;
    let base = nf * (rss / nf).ln();
    Ok((base + 2.0 * df, base + nf.ln() * df))
}

/// `(df, AIC, BIC)` of a fit, with twice the risk standing in for the RSS.
///
/// Regression fits are scored after the `κ̂` rescaling, so the criteria see
/// the de-shrunk fitted values; classification fits are scored as fitted.
pub fn fit_criteria(x: &DesignMatrix, y: &[f64], spec: &FitSpec, fit: &FitResult) -> Result<(f64, f64, f64)> {
    let g = spec.graph.shift_diagonal(spec.lambda2, spec.lambda_g)?;
    let df = effective_df(x, &fit.active_set, &g, spec.lambda_g)?;
    let kappa = if spec.loss.is_classification() || fit.active_set.is_empty() {
        1.0
    } else {
        rescale(y, &x.matvec(&fit.beta)).unwrap_or(1.0)
    };
    let beta: Vec<f64> = fit.beta.iter().map(|b| kappa * b).collect();
    let obj = objective_value(spec, x, y, &beta, None, fit.intercept)?;
    let (aic, bic) = information_criteria(2.0 * obj.risk, df, x.n())?;
    Ok((df, aic, bic))
}

/// `κ̂ = ŷᵀy / ŷᵀŷ`, the no-intercept regression of `y` on `ŷ`.
pub fn rescale(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(format!("y has length {} but fitted values {}", y.len(), yhat.len())));
    }
    let den: f64 = yhat.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::Numeric("cannot rescale against all-zero fitted values".into()));
    }
    Ok(yhat.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / den)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train_groups: Vec<u32>,
    pub test_groups: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub k: usize,
    pub folds: Vec<Fold>,
    pub seed: u64,
}

fn binomial_count(n: usize, k: usize) -> f64 {
    (ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)).exp().round()
}

/// Leave-`k`-groups-out folds. `k = 1` enumerates every group once and
/// ignores `n_folds`; larger `k` draws `n_folds` distinct random subsets.
pub fn make_cv_plan(group_ids: &[u32], k: usize, n_folds: usize, seed: u64) -> Result<CvPlan> {
    let groups: Vec<u32> = group_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let g = groups.len();
    if k == 0 || g <= k {
        return Err(Error::Plan(format!("need more than k = {k} groups, found {g}")));
    }
    let fold_of = |test: BTreeSet<usize>| Fold {
        train_groups: (0..g).filter(|i| !test.contains(i)).map(|i| groups[i]).collect(),
        test_groups: test.into_iter().map(|i| groups[i]).collect(),
    };
    let folds = if k == 1 {
        (0..g).map(|i| fold_of(BTreeSet::from([i]))).collect()
    } else {
        if n_folds == 0 {
            return Err(Error::Plan("n_folds must be positive".into()));
        }
        if (n_folds as f64) > binomial_count(g, k) {
            return Err(Error::Plan(format!("only {} distinct {k}-subsets of {g} groups", binomial_count(g, k))));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut folds = Vec::with_capacity(n_folds);
        while folds.len() < n_folds {
            let subset: BTreeSet<usize> = sample(&mut rng, g, k).into_iter().collect();
            if seen.insert(subset.clone()) {
                folds.push(fold_of(subset));
            }
        }
        folds
    };
    Ok(CvPlan { k, folds, seed })
}

/// Element-wise median across folds.
///
/// With an even fold count the two middle values are averaged, except that
/// the result is zero when either is zero, so a feature survives only if it
/// is nonzero in more than half the folds.
pub fn median_aggregate(fold_betas: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = fold_betas.first().ok_or_else(|| Error::Parameter("no folds to aggregate".into()))?;
    let p = first.len();
    if let Some(b) = fold_betas.iter().find(|b| b.len() != p) {
        return Err(Error::Shape(format!("fold coefficient vectors of length {p} and {}", b.len())));
    }
    let m = fold_betas.len();
    Ok((0..p)
        .map(|j| {
            let mut col: Vec<f64> = fold_betas.iter().map(|b| b[j]).collect();
            col.sort_by(f64::total_cmp);
            if m % 2 == 1 {
                col[m / 2]
            } else {
                let (a, b) = (col[m / 2 - 1], col[m / 2]);
                if a == 0.0 || b == 0.0 {
                    0.0
                } else {
                    0.5 * (a + b)
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// `P(K ≥ successes)`.
    Greater,
    /// Sum of all outcomes no more likely than the observed one.
    TwoSided,
}

/// Exact binomial test of `successes` out of `trials` against `p0`,
/// computed in log space.
pub fn exact_binomial_pvalue(successes: u64, trials: u64, p0: f64, tail: Tail) -> Result<f64> {
    if successes > trials {
        return Err(Error::Parameter(format!("{successes} successes out of {trials} trials")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Parameter(format!("p0 must be in (0, 1), got {p0}")));
    }
    let n = trials as f64;
    let ln_c = ln_gamma(n + 1.0);
    let log_pmf = |k: u64| {
        let k = k as f64;
        ln_c - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0) + k * p0.ln() + (n - k) * (1.0 - p0).ln()
    };
    let terms: Vec<f64> = match tail {
        Tail::Greater => (successes..=trials).map(log_pmf).collect(),
        Tail::TwoSided => {
            let observed = log_pmf(successes);
            // Relative slack as in standard implementations.
            let cut = observed + (1.0 + 1e-7f64).ln();
            (0..=trials).map(log_pmf).filter(|&l| l <= cut).collect()
        }
    };
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|l| (l - max).exp()).sum();
    Ok((max + sum.ln()).exp().min(1.0))
}

/// One grid point. `shift` is the multiple of `η` added to the graph
/// diagonal (`λ2` in [`FitSpec`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub lambda1: f64,
    pub lambda_g: f64,
    pub shift: f64,
    pub delta: Option<f64>,
    pub lambda1_star: Option<f64>,
}

/// Axes of a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lambda1: Vec<f64>,
    pub lambda_g: Vec<f64>,
    pub shifts: Vec<f64>,
    pub deltas: Vec<f64>,
    pub lambda1_star: Vec<f64>,
    /// SVM cost values; the linear-SVM baseline uses ridge weight `1/C`.
    pub svm_c: Vec<f64>,
}

impl GridSpec {
    /// Full search grid over every axis.
    pub fn standard() -> Self {
        Self {
            lambda1: (10..=99).map(f64::from).collect(),
            lambda_g: vec![0.0, 1e1, 1e2, 1e3, 1e4, 1e5],
            shifts: vec![0.0, 1.0, 1e2, 1e3, 1e4],
            deltas: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 1.0, 2.0, 10.0, 100.0],
            lambda1_star: vec![1.0, 0.1, 0.01],
            svm_c: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 1e1, 1e2, 1e3],
        }
    }

    /// A grid with one value per axis.
    pub fn single(point: GridPoint) -> Self {
        Self {
            lambda1: vec![point.lambda1],
            lambda_g: vec![point.lambda_g],
            shifts: vec![point.shift],
            deltas: point.delta.into_iter().collect(),
            lambda1_star: point.lambda1_star.into_iter().collect(),
            svm_c: Vec::new(),
        }
    }

    /// Grid points relevant to `variant`, grouped into warm-start chains:
    /// each chain fixes every axis except `λ1` (visited in descending order)
    /// and `λ1*` (innermost).
    pub fn chains(&self, variant: Variant) -> Vec<Vec<GridPoint>> {
        if variant == Variant::LinearSvm {
            let mut cs = self.svm_c.clone();
            cs.sort_by(|a, b| a.total_cmp(b));
            return vec![cs
                .iter()
                .map(|c| GridPoint { lambda1: 0.0, lambda_g: 1.0 / c, shift: 0.0, delta: None, lambda1_star: None })
                .collect()];
        }
        let mut l1 = self.lambda1.clone();
        l1.sort_by(|a, b| b.total_cmp(a));
        let deltas: Vec<Option<f64>> = if variant.uses_delta() && !self.deltas.is_empty() {
            self.deltas.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let stars: Vec<Option<f64>> = if variant == Variant::SpdaAdaptive && !self.lambda1_star.is_empty() {
            self.lambda1_star.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let mut out = Vec::new();
        for &lg in &self.lambda_g {
            for &shift in &self.shifts {
                for &delta in &deltas {
                    let mut chain = Vec::new();
                    for &lambda1 in &l1 {
                        for &lambda1_star in &stars {
                            chain.push(GridPoint { lambda1, lambda_g: lg, shift, delta, lambda1_star });
                        }
                    }
                    out.push(chain);
                }
            }
        }
        out
    }

    pub fn points(&self, variant: Variant) -> Vec<GridPoint> {
        self.chains(variant).into_iter().flatten().collect()
    }
}

/// Settings shared by every fit in a cross-validation run.
#[derive(Debug, Clone)]
pub struct CvOptions {
    pub variant: Variant,
    /// Tolerance, sweep cap, density cap and the penalty graph.
    pub base: FitSpec,
    /// Per-class trials drawn per training group; `None` trains on raw rows.
    pub per_class: Option<usize>,
    pub seed: u64,
}

impl CvOptions {
    /// Classifier spec at a grid point.
    pub fn spec_at(&self, point: &GridPoint) -> ClassifierSpec {
        let mut fit = self.base.clone();
        fit.lambda1 = point.lambda1;
        fit.lambda_g = point.lambda_g;
        fit.lambda2 = point.shift;
        fit.loss = match (self.variant, point.delta) {
            (Variant::Svgn | Variant::LinearSvm, d) => LossKind::HuberizedHinge { delta: d.unwrap_or(0.5) },
            (Variant::SpdaRobust, d) => LossKind::Huber { delta: d.unwrap_or(1.0) },
            (Variant::SpdaAdaptive, Some(d)) => LossKind::Huber { delta: d },
            _ => LossKind::Squared,
        };
        let mut spec = ClassifierSpec::new(self.variant, fit);
        spec.lambda1_star = point.lambda1_star.unwrap_or(1.0);
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_groups: Vec<u32>,
    pub test_groups: Vec<u32>,
    /// Accuracy on the (resampled) rows the model was fitted on.
    pub train_acc: f64,
    /// Accuracy on every raw training row.
    pub train_acc_raw: f64,
    pub test_acc: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEntry {
    #[serde(flatten)]
    pub point: GridPoint,
    pub median_test_acc: Option<f64>,
    pub failed_folds: usize,
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub variant: Variant,
    /// Per-fold results at the best grid point.
    pub folds: Vec<FoldReport>,
    pub grid: Vec<GridEntry>,
    pub best: usize,
    pub median_test_acc: f64,
    pub median_beta: Vec<f64>,
    /// Threshold of the aggregated model: median of the fold thresholds.
    pub median_threshold: f64,
}

struct FoldData {
    prepared: classify::Prepared,
    test_x: DesignMatrix,
    test_labels: Vec<f64>,
    train_x: DesignMatrix,
    train_labels: Vec<f64>,
}

fn fold_data(x: &DesignMatrix, labels: &[f64], groups: &[u32], fold: &Fold, opts: &CvOptions, idx: usize) -> Result<FoldData> {
    let train_rows: Vec<usize> = (0..x.n()).filter(|&i| fold.train_groups.contains(&groups[i])).collect();
    let test_rows: Vec<usize> = (0..x.n()).filter(|&i| fold.test_groups.contains(&groups[i])).collect();
    if test_rows.is_empty() {
        return Err(Error::Plan(format!("fold {idx} has no test rows")));
    }
    let train_labels: Vec<f64> = train_rows.iter().map(|&i| labels[i]).collect();
    let fit_rows: Vec<usize> = match opts.per_class {
        Some(k) => {
            let g: Vec<u32> = train_rows.iter().map(|&i| groups[i]).collect();
            let sub = balanced_resample(&train_labels, &g, k, opts.seed.wrapping_add(idx as u64))?;
            sub.into_iter().map(|s| train_rows[s]).collect()
        }
        None => train_rows.clone(),
    };
    let fit_labels: Vec<f64> = fit_rows.iter().map(|&i| labels[i]).collect();
    let prepared = classify::prepare(&x.select_rows(&fit_rows), &fit_labels, opts.variant)?;
    Ok(FoldData {
        prepared,
        test_x: x.select_rows(&test_rows),
        test_labels: test_rows.iter().map(|&i| labels[i]).collect(),
        train_x: x.select_rows(&train_rows),
        train_labels,
    })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    Some(if m % 2 == 1 { values[m / 2] } else { 0.5 * (values[m / 2 - 1] + values[m / 2]) })
}

/// Cross-validated grid search for a binary classifier.
///
/// Every (fold, chain) pair is an independent work item; within a chain the
/// fits are warm-started along decreasing `λ1`. Each grid point is scored by
/// its median test accuracy over folds; fit failures are recorded per point.
/// The best point is refitted on every fold to report per-fold accuracies
/// and the median-aggregated coefficients.
pub fn grid_search(
    x: &DesignMatrix,
    labels: &[f64],
    groups: &[u32],
    plan: &CvPlan,
    grid: &GridSpec,
    opts: &CvOptions,
) -> Result<CvReport> {
    if labels.len() != x.n() || groups.len() != x.n() {
        return Err(Error::Shape(format!("X has {} rows, {} labels, {} group ids", x.n(), labels.len(), groups.len())));
    }
    let chains = grid.chains(opts.variant);
    let points: Vec<GridPoint> = chains.iter().flatten().copied().collect();
    if points.is_empty() {
        return Err(Error::Parameter("grid is empty".into()));
    }
    let folds: Vec<Result<FoldData>> = par::map_range(plan.folds.len(), |f| {
        fold_data(x, labels, groups, &plan.folds[f], opts, f)
    });
    let folds: Vec<FoldData> = folds.into_iter().collect::<Result<_>>()?;

    let mut offsets = Vec::with_capacity(chains.len());
    let mut acc = 0;
    for c in &chains {
        offsets.push(acc);
        acc += c.len();
    }
    let items: Vec<(usize, usize)> =
        (0..folds.len()).flat_map(|f| (0..chains.len()).map(move |c| (f, c))).collect();
    let outcomes: Vec<Vec<std::result::Result<f64, String>>> = par::map_items(&items, |&(f, c)| {
        let fd = &folds[f];
        let mut warm: Option<FitResult> = None;
        let mut first: std::result::Result<FitResult, String> = Err(String::new());
        let mut last_l1 = f64::NAN;
        chains[c]
            .iter()
            .map(|pt| {
                let spec = opts.spec_at(pt);
                if pt.lambda1 != last_l1 {
                    first = fd.prepared.pilot(&spec, warm.as_ref()).map_err(|e| e.to_string());
                    if let Ok(fit) = &first {
                        warm = Some(fit.clone());
                    }
                    last_l1 = pt.lambda1;
                }
                let first = first.as_ref().map_err(Clone::clone)?;
                let model = fd.prepared.finish(&spec, first).map_err(|e| e.to_string())?;
                model.accuracy(&fd.test_x, &fd.test_labels).map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut per_point: Vec<Vec<f64>> = vec![Vec::new(); points.len()];
    let mut failures: Vec<(usize, Option<String>)> = vec![(0, None); points.len()];
    for (&(_, c), out) in items.iter().zip(&outcomes) {
        for (k, r) in out.iter().enumerate() {
            let i = offsets[c] + k;
            match r {
                Ok(a) => per_point[i].push(*a),
                Err(e) => {
                    failures[i].0 += 1;
                    failures[i].1.get_or_insert_with(|| e.clone());
                }
            }
        }
    }
    let grid_entries: Vec<GridEntry> = points
        .iter()
        .zip(per_point.iter_mut().zip(failures))
        .map(|(pt, (accs, (failed, err)))| GridEntry {
            point: *pt,
            median_test_acc: if failed == 0 { median(accs) } else { None },
            failed_folds: failed,
            first_error: err,
        })
        .collect();
    let best = grid_entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.median_test_acc.map(|a| (i, a)))
        .fold(None::<(usize, f64)>, |b, (i, a)| match b {
            Some((_, ba)) if ba >= a => b,
            _ => Some((i, a)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numeric("every grid point failed on some fold".into()))?;

    let spec = opts.spec_at(&points[best]);
    let refits: Vec<Result<(FoldReport, Vec<f64>, f64)>> = par::map_range(folds.len(), |f| {
        let fd = &folds[f];
        let model = fd.prepared.fit(&spec)?;
        Ok((
            FoldReport {
                fold: f,
                train_groups: plan.folds[f].train_groups.clone(),
                test_groups: plan.folds[f].test_groups.clone(),
                train_acc: model.train_accuracy,
                train_acc_raw: model.accuracy(&fd.train_x, &fd.train_labels)?,
                test_acc: model.accuracy(&fd.test_x, &fd.test_labels)?,
                n_test: fd.test_labels.len(),
            },
            model.beta,
            model.threshold,
        ))
    });
    let refits: Vec<(FoldReport, Vec<f64>, f64)> = refits.into_iter().collect::<Result<_>>()?;
    let betas: Vec<Vec<f64>> = refits.iter().map(|r| r.1.clone()).collect();
    let mut thresholds: Vec<f64> = refits.iter().map(|r| r.2).collect();
    let median_beta = median_aggregate(&betas)?;
    let mut accs: Vec<f64> = refits.iter().map(|r| r.0.test_acc).collect();
    Ok(CvReport {
        variant: opts.variant,
        folds: refits.into_iter().map(|r| r.0).collect(),
        grid: grid_entries,
        best,
        median_test_acc: median(&mut accs).unwrap_or(f64::NAN),
        median_beta,
        median_threshold: median(&mut thresholds).unwrap_or(0.0),
    })
}

#[derive(Serialize)]
struct ReportJson<'a> {
    variant: String,
    fold: &'a [FoldReport],
    train_acc: Vec<f64>,
    test_acc: Vec<f64>,
    median_test_acc: f64,
    best: GridEntry,
    grid: &'a [GridEntry],
    median_beta_file: &'a str,
}

impl CvReport {
    /// JSON report; `median_beta_file` names where the aggregated
    /// coefficients were written.
    pub fn to_json(&self, median_beta_file: &str) -> Result<String> {
        let doc = ReportJson {
            variant: self.variant.to_string(),
            fold: &self.folds,
            train_acc: self.folds.iter().map(|f| f.train_acc).collect(),
            test_acc: self.folds.iter().map(|f| f.test_acc).collect(),
            median_test_acc: self.median_test_acc,
            best: self.grid[self.best].clone(),
            grid: &self.grid,
            median_beta_file,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    /// Rate surface: one CSV row per grid point.
    pub fn write_rate_surface(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: std::io::Error| Error::io(path, e);
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        writeln!(w, "lambda1,lambda_g,shift,delta,lambda1_star,median_rate").map_err(io)?;
        for e in &self.grid {
            let p = &e.point;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.lambda1,
                p.lambda_g,
                p.shift,
                opt(p.delta),
                opt(p.lambda1_star),
                opt(e.median_test_acc)
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Model built from the median-aggregated coefficients.
    pub fn aggregated_model(&self) -> classify::ClassifierModel {
        let p = self.median_beta.len();
        classify::ClassifierModel {
            variant: self.variant,
            beta: self.median_beta.clone(),
            threshold: self.median_threshold,
            intercept: 0.0,
            train_accuracy: self.folds.iter().map(|f| f.train_acc_raw).sum::<f64>() / self.folds.len().max(1) as f64,
            means: vec![0.0; p],
            norms: vec![1.0; p],
            beta_std: self.median_beta.clone(),
        }
    }
}

/// Accuracy of predictions, with the number correct.
pub fn score(predicted: &[f64], truth: &[f64]) -> Result<(f64, u64)> {
    let a = accuracy(predicted, truth)?;
    Ok((a, predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    fn direct_df(xa: &DMatrix<f64>, ga: &DMatrix<f64>, lg: f64) -> f64 {
        let a = xa.transpose() * xa + ga * lg;
        let hat = xa * a.try_inverse().unwrap() * xa.transpose();
        hat.trace()
    }

    #[test]
    fn df_orthonormal_and_limits() {
        let xa = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let ga = DMatrix::identity(2, 2);
        assert!((effective_df_dense(&xa, &ga, 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(effective_df_dense(&xa, &ga, 1e12).unwrap() < 1e-11);
        let empty = DMatrix::<f64>::zeros(3, 0);
        assert_eq!(effective_df_dense(&empty, &DMatrix::zeros(0, 0), 1.0).unwrap(), 0.0);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(effective_df_dense(&sing, &DMatrix::zeros(2, 2), 0.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn df_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xa = DMatrix::from_fn(5, 2, |_, _| rng.random::<f64>() - 0.5);
        let ga = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let a = effective_df_dense(&xa, &ga, 0.7).unwrap();
        assert!((a - direct_df(&xa, &ga, 0.7)).abs() < 1e-12);
    }

    #[test]
    fn criteria_examples() {
        let (a, b) = information_criteria(10.0, 0.0, 20).unwrap();
        assert_eq!(a, b);
        let (a1, b1) = information_criteria(10.0, 3.0, 20).unwrap();
        let (a2, b2) = information_criteria(10.0, 6.0, 20).unwrap();
        assert!((a2 - a1 - 6.0).abs() < 1e-12);
        assert!((b2 - b1 - 20f64.ln() * 3.0).abs() < 1e-12);
        assert!(b1 > a1);
        assert!(information_criteria(0.0, 1.0, 5).is_err());
    }

    #[test]
    fn rescale_examples() {
        let y = [1.0, -2.0, 3.0];
        let half: Vec<f64> = y.iter().map(|v| v * 0.5).collect();
        assert!((rescale(&y, &half).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(rescale(&y, &y).unwrap(), 1.0);
        assert!(rescale(&y, &[0.0; 3]).is_err());
    }

    #[test]
    fn cv_plans() {
        let groups: Vec<u32> = (0..25).flat_map(|g| [g, g]).collect();
        let loso = make_cv_plan(&groups, 1, 0, 0).unwrap();
        assert_eq!(loso.folds.len(), 25);
        for (i, f) in loso.folds.iter().enumerate() {
            assert_eq!(f.test_groups, vec![i as u32]);
            assert_eq!(f.train_groups.len(), 24);
        }
        let l5 = make_cv_plan(&groups, 5, 25, 3).unwrap();
        assert_eq!(l5.folds.len(), 25);
        let distinct: HashSet<_> = l5.folds.iter().map(|f| f.test_groups.clone()).collect();
        assert_eq!(distinct.len(), 25);
        for f in &l5.folds {
            assert_eq!(f.test_groups.len(), 5);
            assert!(f.test_groups.iter().all(|g| !f.train_groups.contains(g)));
        }
        assert_eq!(l5, make_cv_plan(&groups, 5, 25, 3).unwrap());
        assert!(matches!(make_cv_plan(&[0, 1, 2], 3, 1, 0), Err(Error::Plan(_))));
        assert!(make_cv_plan(&[0, 1, 2, 3], 2, 7, 0).is_err());
        assert_eq!(make_cv_plan(&[0, 1, 2, 3], 2, 6, 0).unwrap().folds.len(), 6);
    }

    #[test]
    fn median_examples() {
        let m = median_aggregate(&[vec![0.0, 4.0], vec![0.0, 5.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m, vec![0.0, 5.0]);
        let same = vec![vec![1.0, -2.0]; 4];
        assert_eq!(median_aggregate(&same).unwrap(), vec![1.0, -2.0]);
        assert!(median_aggregate(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    proptest! {
        #[test]
        fn median_preserves_sparsity(betas in proptest::collection::vec(
            proptest::collection::vec(prop_oneof![Just(0.0), -3.0..3.0f64], 4), 1..9)) {
            let m = median_aggregate(&betas).unwrap();
            for j in 0..4 {
                if m[j] != 0.0 {
                    let nz = betas.iter().filter(|b| b[j] != 0.0).count();
                    prop_assert!(2 * nz > betas.len());
                }
            }
        }

        #[test]
        fn pvalue_matches_direct_sum(trials in 1u64..200, frac in 0.0..=1.0f64) {
            let s = (frac * trials as f64).round() as u64;
            let direct: f64 = (s..=trials)
                .map(|k| {
                    let mut c = 1.0f64;
                    for i in 0..k {
                        c *= (trials - i) as f64 / (i + 1) as f64;
                    }
                    c * 0.5f64.powi(trials as i32)
                })
                .sum();
            let p = exact_binomial_pvalue(s, trials, 0.5, Tail::Greater).unwrap();
            prop_assert!((p - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn pvalue_examples() {
        let p = exact_binomial_pvalue(161, 322, 0.5, Tail::Greater).unwrap();
        assert!((p - 0.5222).abs() < 1e-3);
        let p = exact_binomial_pvalue(10, 10, 0.5, Tail::Greater).unwrap();
        assert!((p - 0.5f64.powi(10)).abs() < 1e-18);
        let two = exact_binomial_pvalue(216, 322, 0.5, Tail::TwoSided).unwrap();
        let one = exact_binomial_pvalue(216, 322, 0.5, Tail::Greater).unwrap();
        assert!((two / one - 2.0).abs() < 1e-9);
        assert!(exact_binomial_pvalue(5, 4, 0.5, Tail::Greater).is_err());
    }

    #[test]
    fn standard_grid_axes() {
        let g = GridSpec::standard();
        assert_eq!(g.lambda1.len(), 90);
        assert_eq!(g.points(Variant::SpdaGraphnet).len(), 90 * 6 * 5);
        assert_eq!(g.points(Variant::SpdaRobust).len(), 90 * 6 * 5 * 10);
        assert_eq!(g.points(Variant::SpdaAdaptive).len(), 90 * 6 * 5 * 10 * 3);
        assert_eq!(g.points(Variant::LinearSvm).len(), 16);
        for chain in g.chains(Variant::SpdaRobust) {
            assert!(chain.windows(2).all(|w| w[0].lambda1 > w[1].lambda1));
        }
    }

    fn toy_classification(seed: u64) -> (DesignMatrix, Vec<f64>, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (120, 6);
        let mut data = Vec::with_capacity(n * p);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let l = if i % 2 == 0 { 1.0 } else { -1.0 };
            for j in 0..p {
                let shift = if j < 2 { 0.8 * l } else { 0.0 };
                data.push(shift + rng.random::<f64>() * 2.0 - 1.0);
            }
            labels.push(l);
        }
        let groups = (0..n).map(|i| (i / 20) as u32).collect();
        (DesignMatrix::from_row_major(n, p, &data).unwrap(), labels, groups)
    }

    fn options(variant: Variant) -> CvOptions {
        let base = FitSpec::new(LossKind::Squared, Arc::new(PenaltyGraph::identity(6)));
        CvOptions { variant, base, per_class: Some(8), seed: 5 }
    }

    #[test]
    fn grid_search_small() {
        let (x, y, g) = toy_classification(1);
        let plan = make_cv_plan(&g, 1, 0, 0).unwrap();
        let grid = GridSpec {
            lambda1: vec![0.5, 0.05],
            lambda_g: vec![0.0, 1.0],
            shifts: vec![0.0],
            deltas: vec![1.0],
            lambda1_star: vec![0.1],
            svm_c: vec![1.0],
        };
        let r = grid_search(&x, &y, &g, &plan, &grid, &options(Variant::SpdaGraphnet)).unwrap();
        assert_eq!(r.grid.len(), 4);
        assert_eq!(r.folds.len(), 6);
        assert!(r.median_test_acc > 0.7, "{}", r.median_test_acc);
        let again = grid_search(&x, &y, &g, &plan, &grid, &options(Variant::SpdaGraphnet)).unwrap();
        assert_eq!(r.to_json("b.txt").unwrap(), again.to_json("b.txt").unwrap());
        let json: serde_json::Value = serde_json::from_str(&r.to_json("b.txt").unwrap()).unwrap();
        for key in ["fold", "train_acc", "test_acc", "grid", "median_beta_file"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn single_point_grid_equals_plain_cv() {
        let (x, y, g) = toy_classification(2);
        let plan = make_cv_plan(&g, 2, 4, 9).unwrap();
        let pt = GridPoint { lambda1: 0.1, lambda_g: 0.5, shift: 0.0, delta: None, lambda1_star: None };
        let opts = options(Variant::SpdaGraphnet);
        let r = grid_search(&x, &y, &g, &plan, &GridSpec::single(pt), &opts).unwrap();
        assert_eq!(r.grid.len(), 1);
        let spec = opts.spec_at(&pt);
        for (f, fold) in plan.folds.iter().enumerate() {
            let fd = fold_data(&x, &y, &g, fold, &opts, f).unwrap();
            let m = fd.prepared.fit(&spec).unwrap();
            assert_eq!(r.folds[f].test_acc, m.accuracy(&fd.test_x, &fd.test_labels).unwrap());
        }
        let mut accs: Vec<f64> = r.folds.iter().map(|f| f.test_acc).collect();
        assert_eq!(r.grid[0].median_test_acc, median(&mut accs));
    }

    #[test]
    fn failures_are_recorded_per_point() {
        let (x, y, g) = toy_classification(3);
        let plan = make_cv_plan(&g, 1, 0, 0).unwrap();
        // Adaptive fits fail when the pilot is empty (huge λ1).
        let grid = GridSpec {
            lambda1: vec![1e6, 0.05],
            lambda_g: vec![0.0],
            shifts: vec![0.0],
            deltas: vec![],
            lambda1_star: vec![0.1],
            svm_c: vec![],
        };
        let mut opts = options(Variant::SpdaAdaptive);
        opts.per_class = None;
        let r = grid_search(&x, &y, &g, &plan, &grid, &opts).unwrap();
        assert_eq!(r.grid[0].failed_folds, 6);
        assert!(r.grid[0].median_test_acc.is_none());
        assert!(r.grid[0].first_error.is_some());
        assert_eq!(r.best, 1);
    }
}
