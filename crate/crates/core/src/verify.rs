//! Slow reference solvers and checkers.
//!
//! Nothing here shares code with the coordinate-descent engine beyond the
//! loss kernels and objective evaluation, so agreement between the two is
//! meaningful. Everything is single-threaded and deterministic; batches of
//! independent instances may be run in parallel by the caller.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{laplacian, lattice_adjacency};
use crate::losses::{objective_value, soft_threshold, LossKind};
use crate::par;
use crate::solver::{self, FitSpec};
use crate::tensor_io::{check_binary_labels, DesignMatrix, LatticeShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OracleMethod {
    ProxGradient,
    SignEnumeration,
    DenseLinearAlgebra,
    NaiveCoordinateDescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub objective: f64,
    pub iterations: usize,
    pub method: OracleMethod,
    /// False when the iteration cap was reached first.
    pub converged: bool,
}

/// Smooth part of the objective and its gradient in `(β, β0)`.
struct Smooth<'a> {
    x: DMatrix<f64>,
    y: &'a [f64],
    loss: LossKind,
    g: DMatrix<f64>,
    lambda_g: f64,
    intercept: bool,
}

impl Smooth<'_> {
    fn value_grad(&self, beta: &DVector<f64>, b0: f64) -> (f64, DVector<f64>, f64) {
        let fitted = &self.x * beta;
        let mut val = 0.0;
        let mut w = DVector::zeros(self.y.len());
        for i in 0..self.y.len() {
            match self.loss {
                LossKind::HuberizedHinge { .. } => {
                    let m = self.y[i] * (b0 + fitted[i]);
                    val += self.loss.value(m);
                    w[i] = self.loss.derivative(m) * self.y[i];
                }
                _ => {
                    let r = self.y[i] - fitted[i];
                    val += self.loss.value(r);
                    w[i] = -self.loss.derivative(r);
                }
            }
        }
        let gb = &self.g * beta;
        val += 0.5 * self.lambda_g * beta.dot(&gb);
        let grad = self.x.transpose() * &w + gb * self.lambda_g;
        let g0 = if self.intercept { w.sum() } else { 0.0 };
        (val, grad, g0)
    }
}

fn dense_x(x: &DesignMatrix) -> DMatrix<f64> {
    x.values().clone()
}

fn l1_weights(spec: &FitSpec, p: usize) -> Vec<f64> {
    (0..p)
        .map(|j| {
            let w = spec.penalty_weights.as_ref().map_or(1.0, |w| w[j]);
            if w.is_infinite() {
                f64::INFINITY
            } else {
                0.5 * spec.lambda1 * w
            }
        })
        .collect()
}

fn prox(z: &DVector<f64>, step: f64, l1: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        z.len(),
        z.iter().zip(l1).map(|(v, l)| if l.is_infinite() { 0.0 } else { soft_threshold(*v, step * l) }),
    )
}

/// Accelerated proximal gradient with backtracking and adaptive restart.
/// Stops when the gradient-map norm falls below `1e-8` or after
/// `max_iter` iterations.
pub fn oracle_prox_gradient(x: &DesignMatrix, y: &[f64], spec: &FitSpec, max_iter: usize) -> Result<OracleResult> {
    let (n, p) = (x.n(), x.p());
    if n * p > 100_000 {
        return Err(Error::Parameter(format!("prox-gradient oracle is limited to n*p <= 1e5, got {}", n * p)));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("X has {n} rows but y has length {}", y.len())));
    }
    spec.validate(p)?;
    if spec.loss.is_classification() {
        check_binary_labels(y)?;
    }
    let smooth = Smooth {
        x: dense_x(x),
        y,
        loss: spec.loss,
        g: spec.graph.shift_diagonal(spec.lambda2, spec.lambda_g)?.to_dense(),
        lambda_g: spec.lambda_g,
        intercept: spec.with_intercept,
    };
    let l1 = l1_weights(spec, p);
    let penalty = |b: &DVector<f64>| b.iter().zip(&l1).map(|(v, l)| if *v == 0.0 { 0.0 } else { l * v.abs() }).sum::<f64>();

    let mut beta = DVector::zeros(p);
    let mut b0 = 0.0;
    let (mut zb, mut z0) = (beta.clone(), b0);
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut f_prev = f64::INFINITY;
    let mut converged = false;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let (fz, gz, gz0) = smooth.value_grad(&zb, z0);
        // Backtracking on the quadratic upper bound.
        let (nb, n0, fnew) = loop {
            let step = 1.0 / lip;
            let nb = prox(&(&zb - &gz * step), step, &l1);
            let n0 = if smooth.intercept { z0 - step * gz0 } else { 0.0 };
            let (fn_, _, _) = smooth.value_grad(&nb, n0);
            let d = &nb - &zb;
            let d0 = n0 - z0;
            let bound = fz + gz.dot(&d) + gz0 * d0 + 0.5 * lip * (d.norm_squared() + d0 * d0);
            if fn_ <= bound + 1e-12 * fz.abs().max(1.0) {
                break (nb, n0, fn_);
            }
            lip *= 2.0;
        };
        let total = fnew + penalty(&nb);
        let moved = (&nb - &beta).norm() + (n0 - b0).abs();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if total > f_prev && t > 1.0 {
            // Restart momentum from the previous iterate. A plain proximal
            // step (t = 1) is accepted even if rounding makes it look uphill.
            t = 1.0;
            zb = beta.clone();
            z0 = b0;
            continue;
        }
        let mom = (t - 1.0) / t_next;
        zb = &nb + (&nb - &beta) * mom;
        z0 = n0 + (n0 - b0) * mom;
        beta = nb;
        b0 = n0;
        t = t_next;
        f_prev = total;
        // Gradient map at the accepted iterate.
        let (_, gb, gb0) = smooth.value_grad(&beta, b0);
        let step = 1.0 / lip;
        let mapped = prox(&(&beta - &gb * step), step, &l1);
        let gmap = ((&beta - &mapped).norm_squared() + (step * gb0).powi(2)).sqrt() / step;
        if gmap < 1e-8 || (moved == 0.0 && gmap < 1e-6) {
            converged = true;
            break;
        }
    }
    let beta: Vec<f64> = beta.iter().copied().collect();
    let objective = objective_value(spec, x, y, &beta, None, b0)?.direct;
    Ok(OracleResult { beta, intercept: b0, objective, iterations: it, method: OracleMethod::ProxGradient, converged })
}

/// Exact global minimizer for squared loss and `p ≤ 12` by enumerating all
/// `3^p` sign patterns.
pub fn oracle_sign_enumeration(x: &DesignMatrix, y: &[f64], spec: &FitSpec) -> Result<OracleResult> {
    let (n, p) = (x.n(), x.p());
    if p > 12 {
        return Err(Error::Parameter(format!("sign enumeration needs p <= 12, got {p}")));
    }
    if spec.loss != LossKind::Squared {
        return Err(Error::Parameter("sign enumeration handles the squared loss only".into()));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("X has {n} rows but y has length {}", y.len())));
    }
    spec.validate(p)?;
    let xd = dense_x(x);
    let g = spec.graph.shift_diagonal(spec.lambda2, spec.lambda_g)?.to_dense();
    let hess = xd.transpose() * &xd + &g * spec.lambda_g;
    let xty = xd.transpose() * DVector::from_column_slice(y);
    let l1 = l1_weights(spec, p);
    let slack = 1e-9 * (1.0 + xty.amax());

    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(p as u32);
    let mut signs = vec![0i8; p];
    for code in 0..total {
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        if signs.iter().zip(&l1).any(|(s, l)| *s != 0 && l.is_infinite()) {
            continue;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        let mut beta = vec![0.0; p];
        if !active.is_empty() {
            let k = active.len();
            let h = DMatrix::from_fn(k, k, |a, b| hess[(active[a], active[b])]);
            let rhs = DVector::from_fn(k, |a, _| xty[active[a]] - l1[active[a]] * f64::from(signs[active[a]]));
            let Some(sol) = h.clone().cholesky().map(|ch| ch.solve(&rhs)) else { continue };
            if active.iter().enumerate().any(|(a, &j)| sol[a] * f64::from(signs[j]) <= 0.0) {
                continue;
            }
            for (a, &j) in active.iter().enumerate() {
                beta[j] = sol[a];
            }
        }
        // Inactive coordinates: |∇_j smooth| ≤ λ1 w_j / 2.
        let bv = DVector::from_column_slice(&beta);
        let grad = &hess * &bv - &xty;
        let feasible = (0..p).all(|j| signs[j] != 0 || l1[j].is_infinite() || grad[j].abs() <= l1[j] + slack);
        if !feasible {
            continue;
        }
        let obj = objective_value(spec, x, y, &beta, None, 0.0)?.direct;
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, beta));
        }
    }
    let (objective, beta) =
        best.ok_or_else(|| Error::Numeric("no sign pattern satisfies the optimality conditions".into()))?;
    Ok(OracleResult {
        beta,
        intercept: 0.0,
        objective,
        iterations: total,
        method: OracleMethod::SignEnumeration,
        converged: true,
    })
}

/// Binary LDA direction `Σ_pooled⁻¹ (μ₊ − μ₋)`.
pub fn oracle_lda_direction(x: &DesignMatrix, labels: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = (x.n(), x.p());
    if p > 50 {
        return Err(Error::Parameter(format!("LDA oracle needs p <= 50, got {p}")));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("X has {n} rows but {} labels", labels.len())));
    }
    check_binary_labels(labels)?;
    let xd = dense_x(x);
    let mut mean = [DVector::zeros(p), DVector::zeros(p)];
    let mut count = [0.0f64; 2];
    for i in 0..n {
        let c = usize::from(labels[i] > 0.0);
        mean[c] += xd.row(i).transpose();
        count[c] += 1.0;
    }
    for c in 0..2 {
        mean[c] /= count[c];
    }
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..n {
        let c = usize::from(labels[i] > 0.0);
        let d = xd.row(i).transpose() - &mean[c];
        cov += &d * d.transpose();
    }
    if n <= 2 {
        return Err(Error::Numeric("pooled covariance needs more than two rows".into()));
    }
    cov /= (n - 2) as f64;
    let diff = &mean[1] - &mean[0];
    let dir = cov
        .cholesky()
        .map(|ch| ch.solve(&diff))
        .ok_or_else(|| Error::Numeric("pooled covariance is singular".into()))?;
    Ok(dir.iter().copied().collect())
}

/// Largest central-difference error of `loss.derivative` over `points`.
pub fn finite_difference_gradient_check(loss: LossKind, points: &[f64]) -> f64 {
    const H: f64 = 1e-6;
    points
        .iter()
        .map(|&r| {
            let fd = (loss.value(r + H) - loss.value(r - H)) / (2.0 * H);
            (fd - loss.derivative(r)).abs()
        })
        .fold(0.0, f64::max)
}

/// Textbook cyclic coordinate descent for
/// `(1/2)‖y − Xβ‖² + (λ1/2)‖β‖₁ + (ridge/2)‖β‖²`, sweeping every coordinate
/// until no coefficient moves by more than `tol`.
pub fn naive_elastic_net(x: &DesignMatrix, y: &[f64], lambda1: f64, ridge: f64, tol: f64) -> Result<OracleResult> {
    let (n, p) = (x.n(), x.p());
    if y.len() != n {
        return Err(Error::Shape(format!("X has {n} rows but y has length {}", y.len())));
    }
    let mut beta = vec![0.0; p];
    let mut r = y.to_vec();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < 1_000_000 {
        sweeps += 1;
        let mut change = 0.0f64;
        for j in 0..p {
            let col = x.column(j);
            let c: f64 = col.iter().map(|v| v * v).sum();
            let rho: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + c * beta[j];
            let new = soft_threshold(rho, 0.5 * lambda1) / (c + ridge);
            let d = new - beta[j];
            if d != 0.0 {
                for (ri, a) in r.iter_mut().zip(col) {
                    *ri -= a * d;
                }
                beta[j] = new;
                change = change.max(d.abs());
            }
        }
        if change < tol {
            converged = true;
            break;
        }
    }
    let objective = 0.5 * r.iter().map(|v| v * v).sum::<f64>()
        + 0.5 * lambda1 * beta.iter().map(|b| b.abs()).sum::<f64>()
        + 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>();
    Ok(OracleResult {
        beta,
        intercept: 0.0,
        objective,
        iterations: sweeps,
        method: OracleMethod::NaiveCoordinateDescent,
        converged,
    })
}

/// Solver variants exercised by the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VariantTag {
    Graphnet,
    Robust,
    Adaptive,
    Svgn,
}

impl VariantTag {
    pub const ALL: [VariantTag; 4] = [VariantTag::Graphnet, VariantTag::Robust, VariantTag::Adaptive, VariantTag::Svgn];

    pub fn name(self) -> &'static str {
        match self {
            VariantTag::Graphnet => "graphnet",
            VariantTag::Robust => "robust",
            VariantTag::Adaptive => "adaptive",
            VariantTag::Svgn => "svgn",
        }
    }
}

/// A random small problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub variant: VariantTag,
    pub seed: u64,
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    /// Fully specified problem; for the adaptive variant the weights come
    /// from a pilot fit.
    pub spec: FitSpec,
}

/// Random instance with `n ≤ 60`, `p ≤ 30` on a random lattice graph.
/// Every third seed gets `p ≤ 8` so sign enumeration applies.
pub fn random_instance(variant: VariantTag, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (variant as u64) << 32);
    let small = seed % 3 == 0;
    let dims = loop {
        let d = if small {
            [rng.random_range(1..=4), rng.random_range(1..=2), 1, rng.random_range(1..=2)]
        } else {
            [rng.random_range(2..=4), rng.random_range(1..=3), rng.random_range(1..=2), rng.random_range(1..=2)]
        };
        let p: usize = d.iter().product();
        if (2..=if small { 8 } else { 30 }).contains(&p) {
            break d;
        }
    };
    let shape = LatticeShape::full(dims)?;
    let p = shape.p();
    let n = rng.random_range(p.max(10)..=60);
    let data: Vec<f64> = (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let x = DesignMatrix::from_row_major(n, p, &data)?.standardize()?;
    let truth: Vec<f64> = (0..p).map(|_| if rng.random_bool(0.4) { rng.random_range(-2.0..2.0) } else { 0.0 }).collect();
    let mut y: Vec<f64> = x.matvec(&truth).iter().map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    // A few gross outliers for the robust variant.
    if variant == VariantTag::Robust {
        for _ in 0..(n / 10).max(1) {
            let i = rng.random_range(0..n);
            y[i] += rng.random_range(-10.0..10.0);
        }
    }
    let loss = match variant {
        VariantTag::Graphnet | VariantTag::Adaptive => LossKind::Squared,
        VariantTag::Robust => LossKind::Huber { delta: rng.random_range(0.1..2.0) },
        VariantTag::Svgn => {
            y = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            if !(y.contains(&1.0) && y.contains(&-1.0)) {
                y[0] = -y[0];
            }
            LossKind::HuberizedHinge { delta: rng.random_range(0.2..1.5) }
        }
    };
    let graph = Arc::new(laplacian(&lattice_adjacency(&shape, rng.random_bool(0.5))?)?);
    let mut spec = FitSpec::new(loss, graph);
    spec.lambda_g = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..3.0) };
    spec.lambda2 = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..1.0) };
    spec.tol = 1e-9;
    let lmax = solver::lambda_max(&x, &y, &spec)?;
    spec.lambda1 = lmax * rng.random_range(0.02..0.6);
    if variant == VariantTag::Adaptive {
        let pilot = solver::fit(&x, &y, &spec)?;
        if pilot.active_set.is_empty() {
            spec.lambda1 = lmax * 0.1;
        }
        let pilot = solver::fit(&x, &y, &spec)?;
        spec.penalty_weights = Some(solver::adaptive_weights(&pilot.beta)?);
        spec.lambda1 *= rng.random_range(0.05..1.0);
    }
    Ok(Instance { variant, seed, x, y, spec })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyEntry {
    pub variant: VariantTag,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub solver_objective: f64,
    pub oracle: OracleMethod,
    pub oracle_objective: f64,
    pub gap: f64,
    pub kkt_violation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub entries: Vec<VerifyEntry>,
    pub max_gap: f64,
    pub passed: bool,
}

/// `|a − b| / |b|`, falling back to the absolute gap when `b` is tiny.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if b.abs() > 1e-12 {
        d / b.abs()
    } else {
        d
    }
}

/// Solve `inst` with the engine and compare against every applicable oracle.
pub fn check_instance(inst: &Instance, tolerance: f64, enum_tolerance: f64) -> Result<Vec<VerifyEntry>> {
    let fit = solver::fit(&inst.x, &inst.y, &inst.spec)?;
    let kkt = solver::kkt_violations(&inst.x, &inst.y, &inst.spec, &fit.beta, fit.intercept)?
        .into_iter()
        .fold(0.0, f64::max);
    let main = objective_value(&inst.spec, &inst.x, &inst.y, &fit.beta, None, fit.intercept)?.direct;
    let mut oracles = vec![(oracle_prox_gradient(&inst.x, &inst.y, &inst.spec, 500_000)?, tolerance)];
    if inst.spec.loss == LossKind::Squared && inst.x.p() <= 8 {
        oracles.push((oracle_sign_enumeration(&inst.x, &inst.y, &inst.spec)?, enum_tolerance));
    }
    Ok(oracles
        .into_iter()
        .map(|(o, tol)| {
            let gap = relative_gap(main, o.objective);
            VerifyEntry {
                variant: inst.variant,
                seed: inst.seed,
                n: inst.x.n(),
                p: inst.x.p(),
                solver_objective: main,
                oracle: o.method,
                oracle_objective: o.objective,
                gap,
                kkt_violation: kkt,
                passed: fit.converged && gap < tol,
            }
        })
        .collect())
}

/// Run `per_variant` random instances of every variant (in parallel) and
/// compare objectives. An entry passes when its gap is strictly below the
/// tolerance, so a zero tolerance always fails.
pub fn run_verification(per_variant: usize, seed: u64, tolerance: f64) -> Result<VerifyReport> {
    let work: Vec<(VariantTag, u64)> = VariantTag::ALL
        .iter()
        .flat_map(|&v| (0..per_variant as u64).map(move |k| (v, seed.wrapping_add(k))))
        .collect();
    let results: Vec<Result<Vec<VerifyEntry>>> = par::map_items(&work, |&(v, s)| {
        let inst = random_instance(v, s)?;
        check_instance(&inst, tolerance, tolerance.min(1e-6))
    });
    let mut entries = Vec::new();
    for r in results {
        entries.extend(r?);
    }
    let max_gap = entries.iter().map(|e| e.gap).fold(0.0, f64::max);
    let passed = entries.iter().all(|e| e.passed);
    Ok(VerifyReport { tolerance, entries, max_gap, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::PenaltyGraph;

    fn spec(loss: LossKind, p: usize) -> FitSpec {
        FitSpec::new(loss, Arc::new(PenaltyGraph::zero(p)))
    }

    #[test]
    fn prox_gradient_matches_ols() {
        let x = DesignMatrix::from_row_major(4, 2, &[1.0, 0.5, 0.2, 1.0, -1.0, 0.3, 0.4, -0.7]).unwrap();
        let y = [1.0, 2.0, -0.5, 0.3];
        let o = oracle_prox_gradient(&x, &y, &spec(LossKind::Squared, 2), 100_000).unwrap();
        let xd = x.values();
        let ols = (xd.transpose() * xd).try_inverse().unwrap() * xd.transpose() * DVector::from_column_slice(&y);
        assert!(o.converged);
        for j in 0..2 {
            assert!((o.beta[j] - ols[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn one_feature_lasso_closed_form() {
        let x = DesignMatrix::from_row_major(3, 1, &[1.0, 2.0, -1.0]).unwrap();
        let y = [2.0, 3.0, 0.5];
        let s = spec(LossKind::Squared, 1).lambda1(1.5);
        let xty: f64 = 1.0 * 2.0 + 2.0 * 3.0 - 0.5;
        let expect = soft_threshold(xty, 0.75) / 6.0;
        let o = oracle_prox_gradient(&x, &y, &s, 100_000).unwrap();
        assert!((o.beta[0] - expect).abs() < 1e-9);
        let e = oracle_sign_enumeration(&x, &y, &s).unwrap();
        assert!((e.beta[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn enumeration_orthogonal_elastic_net() {
        let x = DesignMatrix::from_row_major(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = [3.0, -0.2];
        let mut s = FitSpec::new(LossKind::Squared, Arc::new(PenaltyGraph::zero(2))).lambda1(1.0);
        s.lambda_g = 0.5;
        s.lambda2 = 0.5;
        let e = oracle_sign_enumeration(&x, &y, &s).unwrap();
        for j in 0..2 {
            assert!((e.beta[j] - soft_threshold(y[j], 0.5) / 1.5).abs() < 1e-14);
        }
        assert!(oracle_sign_enumeration(&DesignMatrix::from_row_major(1, 13, &[1.0; 13]).unwrap(), &[1.0], &spec(LossKind::Squared, 13)).is_err());
    }

    #[test]
    fn enumeration_and_prox_agree() {
        for seed in (0..30).step_by(3) {
            let inst = random_instance(VariantTag::Graphnet, seed).unwrap();
            assert!(inst.x.p() <= 8);
            let a = oracle_prox_gradient(&inst.x, &inst.y, &inst.spec, 500_000).unwrap();
            let b = oracle_sign_enumeration(&inst.x, &inst.y, &inst.spec).unwrap();
            assert!(relative_gap(a.objective, b.objective) < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn lda_examples() {
        let x = DesignMatrix::from_row_major(
            6,
            2,
            &[2.0, 0.1, 2.5, -0.1, 1.5, 0.0, -2.0, 0.1, -2.5, -0.1, -1.5, 0.0],
        )
        .unwrap();
        let l = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let d = oracle_lda_direction(&x, &l).unwrap();
        assert!(d[0] > 0.0 && d[1].abs() < 1e-12 * d[0].abs().max(1.0));
        let same = DesignMatrix::from_row_major(4, 1, &[1.0, -1.0, 1.0, -1.0]).unwrap();
        let d = oracle_lda_direction(&same, &[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn finite_differences() {
        let pts: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.05).collect();
        assert!(finite_difference_gradient_check(LossKind::Squared, &pts) < 1e-9);
        let d = 0.8;
        let hp = [0.5 * d, -0.5 * d, 2.0 * d, -2.0 * d];
        assert!(finite_difference_gradient_check(LossKind::Huber { delta: d }, &hp) < 1e-5);
        assert!(finite_difference_gradient_check(LossKind::HuberizedHinge { delta: 0.5 }, &[0.5]) < 1e-5);
    }

    #[test]
    fn naive_cd_is_elastic_net() {
        let x = DesignMatrix::from_row_major(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let o = naive_elastic_net(&x, &[3.0, 0.2], 1.0, 1.0, 1e-15).unwrap();
        assert_eq!(o.beta, vec![1.25, 0.0]);
    }

    #[test]
    fn zero_tolerance_fails() {
        let r = run_verification(1, 3, 0.0).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn deterministic_oracles() {
        let inst = random_instance(VariantTag::Svgn, 4).unwrap();
        let a = oracle_prox_gradient(&inst.x, &inst.y, &inst.spec, 200_000).unwrap();
        let b = oracle_prox_gradient(&inst.x, &inst.y, &inst.spec, 200_000).unwrap();
        assert_eq!(a, b);
    }
}
