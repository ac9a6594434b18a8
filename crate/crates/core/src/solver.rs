//! Active-set coordinate descent for the GraphNet family.
//!
//! Every variant minimizes
//!
//! ```text
//! risk + (λ1/2) Σ w_j |β_j| + (λG/2) βᵀ G̃ β,      G̃ = G + (λ2/λG) I
//! ```
//!
//! Squared-error fits run plain cyclic coordinate descent on `β`. Huber fits
//! run on the augmented variables `[β α]` with the quadratic risk
//! `(1/2)‖y − Xβ − α‖² + δ‖α‖₁`; huberized-hinge fits run on `[β0 β α]` with
//! `(1/2δ)‖1 − y∘(β0 + Xβ) − α‖² + Σ max(0, α_i)`. Both augmented risks
//! reduce to the original loss when minimized over `α`, so a single engine
//! with exact coordinate minimizers covers every variant.
//!
//! Each solve cycles over the current active set (plus the auxiliary
//! coordinates) until the largest coordinate change falls below `tol`, then
//! computes the optimality conditions of the original (non-augmented) problem
//! for all `p` coordinates. Violators are admitted to the active set; if none
//! remain and every condition holds within `tol`, the fit is certified.
//! That full-gradient pass is the `O(np)` part of the cost and runs in
//! parallel over columns.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::PenaltyGraph;
use crate::losses::{hinge_aux_update, soft_threshold, LossKind};
use crate::modelsel::{self, Criterion};
use crate::par;
use crate::tensor_io::{check_binary_labels, DesignMatrix};

/// Everything that defines one penalized fit except the data.
#[derive(Debug, Clone)]
pub struct FitSpec {
    pub loss: LossKind,
    pub lambda1: f64,
    /// Identity weight folded into the graph as a diagonal shift of `λ2/λG`.
    pub lambda2: f64,
    pub lambda_g: f64,
    pub graph: Arc<PenaltyGraph>,
    /// Per-coordinate ℓ1 weights; `f64::INFINITY` pins a coordinate at zero.
    pub penalty_weights: Option<Vec<f64>>,
    /// Fit an unpenalized intercept (huberized-hinge loss only).
    pub with_intercept: bool,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Largest admissible fraction of nonzero coefficients.
    pub density_cap: f64,
}

impl FitSpec {
    pub fn new(loss: LossKind, graph: Arc<PenaltyGraph>) -> Self {
        Self {
            loss,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda_g: 0.0,
            graph,
            penalty_weights: None,
            with_intercept: loss.is_classification(),
            tol: 1e-6,
            max_sweeps: 50_000,
            density_cap: 1.0,
        }
    }

    pub fn lambda1(mut self, v: f64) -> Self {
        self.lambda1 = v;
        self
    }

    pub fn lambda2(mut self, v: f64) -> Self {
        self.lambda2 = v;
        self
    }

    pub fn lambda_g(mut self, v: f64) -> Self {
        self.lambda_g = v;
        self
    }

    pub fn tol(mut self, v: f64) -> Self {
        self.tol = v;
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.loss.validate()?;
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambdaG", self.lambda_g)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.graph.size() != p {
            return Err(Error::Shape(format!("graph has size {} but X has {p} columns", self.graph.size())));
        }
        if let Some(w) = &self.penalty_weights {
            if w.len() != p {
                return Err(Error::Shape(format!("{} penalty weights for {p} columns", w.len())));
            }
            if let Some(v) = w.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::Parameter(format!("penalty weights must be positive, got {v}")));
            }
        }
        if self.with_intercept && !self.loss.is_classification() {
            return Err(Error::Parameter("an intercept is only fitted for the huberized-hinge loss".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be positive, got {}", self.tol)));
        }
        if !(0.0..=1.0).contains(&self.density_cap) {
            return Err(Error::Parameter(format!("density_cap must be in [0, 1], got {}", self.density_cap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxSweeps,
    DensityCap,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// Auxiliary residual variables (Huber and huberized-hinge fits).
    pub alpha: Option<Vec<f64>>,
    pub intercept: f64,
    pub active_set: Vec<usize>,
    /// Objective after every sweep; non-increasing.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub status: FitStatus,
    pub lambda1: f64,
    /// Largest optimality-condition violation at the returned point.
    pub kkt_violation: f64,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Coordinate-descent state. `resid` is `y − Xβ − α` for regression losses
/// and `1 − y∘(β0 + Xβ) − α` for the huberized hinge.
#[derive(Debug, Clone)]
struct State {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    intercept: f64,
    resid: Vec<f64>,
}

struct Engine<'a> {
    x: &'a DesignMatrix,
    y: &'a [f64],
    loss: LossKind,
    graph: PenaltyGraph,
    lambda_g: f64,
    col_sq: Vec<f64>,
    /// `λ1 · w_j`, infinite for pinned coordinates.
    l1: Vec<f64>,
    /// Multiplier that puts the augmented risk in unit-curvature form:
    /// δ for the huberized hinge, 1 otherwise.
    scale: f64,
    intercept: bool,
    tol: f64,
    max_sweeps: usize,
    max_active: usize,
}

impl<'a> Engine<'a> {
    fn new(x: &'a DesignMatrix, y: &'a [f64], spec: &FitSpec) -> Result<Self> {
        let (n, p) = (x.n(), x.p());
        if y.len() != n {
            return Err(Error::Shape(format!("X has {n} rows but y has length {}", y.len())));
        }
        spec.validate(p)?;
        if spec.loss.is_classification() {
            check_binary_labels(y)?;
        }
        let graph = spec.graph.shift_diagonal(spec.lambda2, spec.lambda_g)?;
        let col_sq = par::map_range(p, |j| x.column(j).iter().map(|v| v * v).sum());
        let mut engine = Self {
            x,
            y,
            loss: spec.loss,
            graph,
            lambda_g: spec.lambda_g,
            col_sq,
            l1: Vec::new(),
            scale: match spec.loss {
                LossKind::HuberizedHinge { delta } => delta,
                _ => 1.0,
            },
            intercept: spec.with_intercept,
            tol: spec.tol,
            max_sweeps: spec.max_sweeps,
            max_active: (spec.density_cap * p as f64).floor() as usize,
        };
        engine.set_lambda(spec.lambda1, spec.penalty_weights.as_deref());
        let lg = engine.scale * engine.lambda_g;
        for j in 0..p {
            if engine.l1[j].is_finite() && !(engine.col_sq[j] + lg * engine.graph.diag(j) > 0.0) {
                return Err(Error::DegenerateCoordinate(j));
            }
        }
        Ok(engine)
    }

    fn set_lambda(&mut self, lambda1: f64, weights: Option<&[f64]>) {
        let p = self.x.p();
        self.l1 = (0..p)
            .map(|j| {
                let w = weights.map_or(1.0, |w| w[j]);
                if w.is_infinite() {
                    f64::INFINITY
                } else {
                    lambda1 * w
                }
            })
            .collect();
    }

    fn n(&self) -> usize {
        self.x.n()
    }

    fn has_alpha(&self) -> bool {
        !matches!(self.loss, LossKind::Squared)
    }

    fn is_hinge(&self) -> bool {
        self.loss.is_classification()
    }

    fn cold_state(&self) -> State {
        let n = self.n();
        let resid = if self.is_hinge() { vec![1.0; n] } else { self.y.to_vec() };
        State { beta: vec![0.0; self.x.p()], alpha: vec![0.0; n], intercept: 0.0, resid }
    }

    fn warm_state(&self, from: &FitResult) -> State {
        let n = self.n();
        let mut beta = from.beta.clone();
        for (b, l) in beta.iter_mut().zip(&self.l1) {
            if l.is_infinite() {
                *b = 0.0;
            }
        }
        let alpha = match (&from.alpha, self.has_alpha()) {
            (Some(a), true) if a.len() == n => a.clone(),
            _ => vec![0.0; n],
        };
        let intercept = if self.intercept { from.intercept } else { 0.0 };
        let fitted = self.x.matvec(&beta);
        let resid = (0..n)
            .map(|i| {
                if self.is_hinge() {
                    1.0 - self.y[i] * (intercept + fitted[i]) - alpha[i]
                } else {
                    self.y[i] - fitted[i] - alpha[i]
                }
            })
            .collect();
        State { beta, alpha, intercept, resid }
    }

    /// Exact minimization over `β_j`; returns `|Δβ_j|`.
    #[inline]
    fn update_beta(&self, j: usize, st: &mut State) -> Result<f64> {
        let xj = self.x.column(j);
        let dot: f64 = if self.is_hinge() {
            xj.iter().zip(self.y).zip(&st.resid).map(|((x, y), r)| x * y * r).sum()
        } else {
            xj.iter().zip(&st.resid).map(|(x, r)| x * r).sum()
        };
        let c = self.col_sq[j];
        let lg = self.scale * self.lambda_g;
        let denom = c + lg * self.graph.diag(j);
        if !(denom > 0.0) {
            return Err(Error::DegenerateCoordinate(j));
        }
        let old = st.beta[j];
        let coupling = if lg != 0.0 { lg * self.graph.offdiag_dot(j, &st.beta) } else { 0.0 };
        let rho = dot + c * old - coupling;
        let new = soft_threshold(rho, 0.5 * self.scale * self.l1[j]) / denom;
        let diff = new - old;
        if diff != 0.0 {
            if self.is_hinge() {
                for ((r, x), y) in st.resid.iter_mut().zip(xj).zip(self.y) {
                    *r -= x * y * diff;
                }
            } else {
                for (r, x) in st.resid.iter_mut().zip(xj) {
                    *r -= x * diff;
                }
            }
            st.beta[j] = new;
        }
        Ok(diff.abs())
    }

    /// Exact minimization over the intercept and every `α_i`.
    fn update_aux(&self, st: &mut State) -> f64 {
        let mut change = 0.0f64;
        if self.intercept {
            let n = self.n() as f64;
            let d: f64 = self.y.iter().zip(&st.resid).map(|(y, r)| y * r).sum::<f64>() / n;
            if d != 0.0 {
                for (r, y) in st.resid.iter_mut().zip(self.y) {
                    *r -= y * d;
                }
                st.intercept += d;
                change = change.max(d.abs());
            }
        }
        match self.loss {
            LossKind::Squared => {}
            LossKind::Huber { delta } => {
                for (r, a) in st.resid.iter_mut().zip(st.alpha.iter_mut()) {
                    let u = *r + *a;
                    let new = soft_threshold(u, delta);
                    change = change.max((new - *a).abs());
                    *a = new;
                    *r = u - new;
                }
            }
            LossKind::HuberizedHinge { delta } => {
                for (r, a) in st.resid.iter_mut().zip(st.alpha.iter_mut()) {
                    let u = *r + *a;
                    let new = hinge_aux_update(u, delta);
                    change = change.max((new - *a).abs());
                    *a = new;
                    *r = u - new;
                }
            }
        }
        change
    }

    /// Augmented objective, in the units of the original objective.
    fn objective(&self, st: &State) -> f64 {
        let all: Vec<usize> = (0..st.beta.len()).filter(|&j| st.beta[j] != 0.0).collect();
        self.objective_on(st, &all)
    }

    /// Objective when every nonzero coefficient is listed in `support`.
    fn objective_on(&self, st: &State, support: &[usize]) -> f64 {
        let risk = match self.loss {
            LossKind::Squared => st.resid.iter().map(|r| 0.5 * r * r).sum::<f64>(),
            LossKind::Huber { delta } => st
                .resid
                .iter()
                .zip(&st.alpha)
                .map(|(r, a)| 0.5 * r * r + delta * a.abs())
                .sum(),
            LossKind::HuberizedHinge { delta } => st
                .resid
                .iter()
                .zip(&st.alpha)
                .map(|(r, a)| r * r / (2.0 * delta) + a.max(0.0))
                .sum(),
        };
        let mut l1 = 0.0;
        let mut quad = 0.0;
        for &j in support {
            let b = st.beta[j];
            if b != 0.0 {
                l1 += self.l1[j] * b.abs();
                if self.lambda_g != 0.0 {
                    quad += b * (self.graph.diag(j) * b + self.graph.offdiag_dot(j, &st.beta));
                }
            }
        }
        risk + 0.5 * l1 + 0.5 * self.lambda_g * quad
    }

    /// Pseudo-residual `w` with `∂risk/∂β_j = −X_jᵀw`, from the original loss.
    fn pseudo_residual(&self, st: &State) -> Vec<f64> {
        match self.loss {
            LossKind::Squared => st.resid.clone(),
            LossKind::Huber { delta } => st
                .resid
                .iter()
                .zip(&st.alpha)
                .map(|(r, a)| (r + a).clamp(-delta, delta))
                .collect(),
            LossKind::HuberizedHinge { delta } => st
                .resid
                .iter()
                .zip(&st.alpha)
                .zip(self.y)
                .map(|((r, a), y)| {
                    // u = 1 − margin; −L'(margin) = clamp(u, 0, δ)/δ.
                    y * (r + a).clamp(0.0, delta) / delta
                })
                .collect(),
        }
    }

    /// Optimality violations for every `β_j` plus the intercept condition.
    fn kkt(&self, st: &State) -> (Vec<f64>, f64) {
        let w = self.pseudo_residual(st);
        let viol = par::map_range(self.x.p(), |j| {
            let l = self.l1[j];
            if l.is_infinite() {
                return 0.0;
            }
            let mut g = -self.x.column(j).iter().zip(&w).map(|(x, w)| x * w).sum::<f64>();
            if self.lambda_g != 0.0 {
                g += self.lambda_g * (self.graph.diag(j) * st.beta[j] + self.graph.offdiag_dot(j, &st.beta));
            }
            let b = st.beta[j];
            if b != 0.0 {
                (g + 0.5 * l * b.signum()).abs()
            } else {
                (g.abs() - 0.5 * l).max(0.0)
            }
        });
        let icpt = if self.intercept { w.iter().sum::<f64>().abs() } else { 0.0 };
        (viol, icpt)
    }

    fn solve(&self, st: &mut State) -> Result<FitResult> {
        let p = self.x.p();
        let mut active: Vec<usize> =
            (0..p).filter(|&j| st.beta[j] != 0.0 && self.l1[j].is_finite()).collect();
        let mut in_active = vec![false; p];
        for &j in &active {
            in_active[j] = true;
        }
        let mut trace = vec![self.objective(st)];
        let mut sweeps = 0usize;
        let mut inner_tol = self.tol;
        let mut status = FitStatus::MaxSweeps;
        let mut kkt_violation = f64::INFINITY;

        'outer: loop {
            loop {
                if sweeps >= self.max_sweeps {
                    break 'outer;
                }
                let mut change = 0.0f64;
                for &j in &active {
                    change = change.max(self.update_beta(j, st)?);
                }
                if self.has_alpha() || self.intercept {
                    change = change.max(self.update_aux(st));
                }
                sweeps += 1;
                trace.push(self.objective_on(st, &active));
                if change < inner_tol {
                    break;
                }
            }
            let (viol, icpt) = self.kkt(st);
            let mut admitted = false;
            for j in 0..p {
                if viol[j] > self.tol && st.beta[j] == 0.0 && !in_active[j] {
                    in_active[j] = true;
                    active.push(j);
                    admitted = true;
                }
            }
            kkt_violation = viol.iter().copied().fold(icpt, f64::max);
            if admitted {
                active.sort_unstable();
                if active.len() > self.max_active {
                    status = FitStatus::DensityCap;
                    break;
                }
                continue;
            }
            if kkt_violation <= self.tol {
                status = FitStatus::Converged;
                break;
            }
            inner_tol = (inner_tol * 0.1).max(f64::MIN_POSITIVE);
        }

        let active_set: Vec<usize> = (0..p).filter(|&j| st.beta[j] != 0.0).collect();
        Ok(FitResult {
            beta: st.beta.clone(),
            alpha: self.has_alpha().then(|| st.alpha.clone()),
            intercept: st.intercept,
            active_set,
            objective_trace: trace,
            sweeps,
            converged: status == FitStatus::Converged,
            status,
            lambda1: f64::NAN,
            kkt_violation,
        })
    }
}

/// Fit any variant at `spec.lambda1`, optionally warm-started.
pub fn fit_warm(x: &DesignMatrix, y: &[f64], spec: &FitSpec, warm: Option<&FitResult>) -> Result<FitResult> {
    let engine = Engine::new(x, y, spec)?;
    let mut st = match warm {
        Some(w) if w.beta.len() == x.p() => engine.warm_state(w),
        _ => engine.cold_state(),
    };
    let mut fit = engine.solve(&mut st)?;
    fit.lambda1 = spec.lambda1;
    Ok(fit)
}

pub fn fit(x: &DesignMatrix, y: &[f64], spec: &FitSpec) -> Result<FitResult> {
    fit_warm(x, y, spec, None)
}

/// Squared-error GraphNet.
pub fn fit_graphnet(x: &DesignMatrix, y: &[f64], spec: &FitSpec) -> Result<FitResult> {
    if spec.loss != LossKind::Squared {
        return Err(Error::Parameter("fit_graphnet needs the squared loss".into()));
    }
    fit(x, y, spec)
}

/// Huber-loss GraphNet solved on the augmented variables `[β α]`.
pub fn fit_robust(x: &DesignMatrix, y: &[f64], spec: &FitSpec) -> Result<FitResult> {
    if !matches!(spec.loss, LossKind::Huber { .. }) {
        return Err(Error::Parameter("fit_robust needs the Huber loss".into()));
    }
    fit(x, y, spec)
}

/// Support-vector GraphNet: huberized hinge with intercept on `y ∈ {−1, +1}`.
pub fn fit_svgn(x: &DesignMatrix, y: &[f64], spec: &FitSpec) -> Result<FitResult> {
    if !spec.loss.is_classification() {
        return Err(Error::Parameter("fit_svgn needs the huberized-hinge loss".into()));
    }
    fit(x, y, spec)
}

/// Adaptive weights `1/|β̃_j|`, infinite where the pilot is zero.
pub fn adaptive_weights(pilot_beta: &[f64]) -> Result<Vec<f64>> {
    if pilot_beta.iter().all(|&b| b == 0.0) {
        return Err(Error::Parameter("pilot fit has no nonzero coefficients to adapt on".into()));
    }
    Ok(pilot_beta.iter().map(|&b| if b == 0.0 { f64::INFINITY } else { 1.0 / b.abs() }).collect())
}

/// Refit with ℓ1 weights `λ1*·ŵ_j` from a pilot fit; `spec.lambda1` is `λ1*`.
pub fn fit_adaptive(x: &DesignMatrix, y: &[f64], spec: &FitSpec, pilot: &FitResult) -> Result<FitResult> {
    let mut s = spec.clone();
    s.penalty_weights = Some(adaptive_weights(&pilot.beta)?);
    fit_warm(x, y, &s, Some(pilot))
}

/// One coordinate update computed from scratch: `G` must already include
/// its diagonal shift, `lambda1_j` is the coordinate's full ℓ1 weight.
pub fn coordinate_update_graphnet(
    j: usize,
    x: &DesignMatrix,
    y: &[f64],
    beta: &[f64],
    g: &PenaltyGraph,
    lambda1_j: f64,
    lambda_g: f64,
) -> Result<f64> {
    if y.len() != x.n() || beta.len() != x.p() || g.size() != x.p() || j >= x.p() {
        return Err(Error::Shape("coordinate update dimensions disagree".into()));
    }
    let xj = x.column(j);
    let fitted = x.matvec(beta);
    let rho: f64 = xj
        .iter()
        .zip(y.iter().zip(&fitted))
        .map(|(xv, (yv, f))| xv * (yv - f + xv * beta[j]))
        .sum::<f64>()
        - lambda_g * g.offdiag_dot(j, beta);
    let denom = xj.iter().map(|v| v * v).sum::<f64>() + lambda_g * g.diag(j);
    if !(denom > 0.0) {
        return Err(Error::DegenerateCoordinate(j));
    }
    Ok(soft_threshold(rho, 0.5 * lambda1_j) / denom)
}

/// Optimality violations of `(β, β0)` for `spec`, computed from scratch on
/// the original loss. Entry `p` is the intercept condition (zero without an
/// intercept).
pub fn kkt_violations(x: &DesignMatrix, y: &[f64], spec: &FitSpec, beta: &[f64], intercept: f64) -> Result<Vec<f64>> {
    let (n, p) = (x.n(), x.p());
    if y.len() != n || beta.len() != p {
        return Err(Error::Shape("kkt dimensions disagree".into()));
    }
    spec.validate(p)?;
    let g = spec.graph.shift_diagonal(spec.lambda2, spec.lambda_g)?;
    let fitted = x.matvec(beta);
    // ∂risk/∂β_j = −X_jᵀ w.
    let w: Vec<f64> = (0..n)
        .map(|i| match spec.loss {
            LossKind::HuberizedHinge { .. } => {
                -y[i] * spec.loss.derivative(y[i] * (intercept + fitted[i]))
            }
            _ => spec.loss.derivative(y[i] - fitted[i]),
        })
        .collect();
    let gb = g.matvec(beta);
    let mut out: Vec<f64> = (0..p)
        .map(|j| {
            let wt = spec.penalty_weights.as_ref().map_or(1.0, |w| w[j]);
            if wt.is_infinite() {
                return if beta[j] == 0.0 { 0.0 } else { f64::INFINITY };
            }
            let l = 0.5 * spec.lambda1 * wt;
            let grad = -x.column(j).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + spec.lambda_g * gb[j];
            if beta[j] != 0.0 {
                (grad + l * beta[j].signum()).abs()
            } else {
                (grad.abs() - l).max(0.0)
            }
        })
        .collect();
    out.push(if spec.with_intercept { w.iter().sum::<f64>().abs() } else { 0.0 });
    Ok(out)
}

/// Smallest `λ1` at which the all-zero `β` is optimal.
pub fn lambda_max(x: &DesignMatrix, y: &[f64], spec: &FitSpec) -> Result<f64> {
    let mut s = spec.clone();
    // Pin every β_j at zero and let the auxiliary coordinates settle.
    s.penalty_weights = Some(vec![f64::INFINITY; x.p()]);
    let engine = Engine::new(x, y, &s)?;
    let mut st = engine.cold_state();
    engine.solve(&mut st)?;
    let w = engine.pseudo_residual(&st);
    let weights = spec.penalty_weights.as_deref();
    let lm = (0..x.p())
        .filter_map(|j| {
            let wt = weights.map_or(1.0, |w| w[j]);
            wt.is_finite()
                .then(|| 2.0 * x.column(j).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().abs() / wt)
        })
        .fold(0.0, f64::max);
    Ok(lm)
}

/// `count` log-spaced values from `lambda_max` down to `lambda_max·min_ratio`.
pub fn default_path(lambda_max: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => {
            let (hi, lo) = (lambda_max.ln(), (lambda_max * min_ratio).ln());
            (0..count).map(|k| (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}

/// The integer grid `99, 98, …, 10`.
pub fn integer_lambda_grid() -> Vec<f64> {
    (10..=99).rev().map(f64::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStop {
    Completed,
    /// Stopped before this path index because the fit exceeded the density cap.
    DensityCap(usize),
    /// Stopped after this index because the criterion increased.
    Criterion(usize),
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub fits: Vec<FitResult>,
    /// `(df, AIC, BIC)` for each fit, when computable.
    pub criteria: Vec<Option<(f64, f64, f64)>>,
    pub stop: PathStop,
}

impl PathResult {
    /// Index of the fit minimizing the criterion.
    pub fn best_by(&self, criterion: Criterion) -> Option<usize> {
        self.criteria
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|(_, aic, bic)| (i, criterion.pick(aic, bic))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

/// Shared warm-started path loop. `after` sees each kept fit and may end
/// the path by returning a stop reason.
fn run_path(
    x: &DesignMatrix,
    y: &[f64],
    spec: &FitSpec,
    path: &[f64],
    mut after: impl FnMut(usize, &FitResult) -> Option<PathStop>,
) -> Result<(Vec<FitResult>, PathStop)> {
    if path.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Parameter("lambda path must be strictly decreasing".into()));
    }
    if let Some(l) = path.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::Parameter(format!("path value {l} is negative")));
    }
    let mut engine = Engine::new(x, y, spec)?;
    let mut st = engine.cold_state();
    let mut fits = Vec::with_capacity(path.len());
    for (k, &lambda) in path.iter().enumerate() {
        engine.set_lambda(lambda, spec.penalty_weights.as_deref());
        let mut fit = engine.solve(&mut st)?;
        fit.lambda1 = lambda;
        if fit.status == FitStatus::DensityCap {
            return Ok((fits, PathStop::DensityCap(k)));
        }
        let stop = after(k, &fit);
        fits.push(fit);
        if let Some(stop) = stop {
            return Ok((fits, stop));
        }
    }
    Ok((fits, PathStop::Completed))
}

/// Warm-started fits along a strictly decreasing `λ1` path, without model
/// selection. Stops before the first fit that exceeds `spec.density_cap`.
pub fn sweep_path(x: &DesignMatrix, y: &[f64], spec: &FitSpec, path: &[f64]) -> Result<(Vec<FitResult>, PathStop)> {
    run_path(x, y, spec, path, |_, _| None)
}

/// Warm-started fits along a strictly decreasing `λ1` path, scored by
/// AIC/BIC.
///
/// Stops early when a fit would exceed `spec.density_cap` (that fit is
/// dropped) or, with a stop rule, once the criterion increases (that fit is
/// kept).
pub fn fit_path(
    x: &DesignMatrix,
    y: &[f64],
    spec: &FitSpec,
    path: &[f64],
    stop_rule: Option<Criterion>,
) -> Result<PathResult> {
    let mut criteria = Vec::with_capacity(path.len());
    let mut last_ic: Option<f64> = None;
    let (fits, stop) = run_path(x, y, spec, path, |k, fit| {
        let mut s = spec.clone();
        s.lambda1 = fit.lambda1;
        let ic = modelsel::fit_criteria(x, y, &s, fit).ok();
        criteria.push(ic);
        let v = rule_value(stop_rule, ic)?;
        let increased = last_ic.is_some_and(|prev| v > prev);
        last_ic = Some(v);
        increased.then_some(PathStop::Criterion(k))
    })?;
    Ok(PathResult { fits, criteria, stop })
}

fn rule_value(rule: Option<Criterion>, ic: Option<(f64, f64, f64)>) -> Option<f64> {
    let (rule, (_, aic, bic)) = (rule?, ic?);
    Some(rule.pick(aic, bic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, lattice_adjacency};
    use crate::losses::objective_value;
    use crate::tensor_io::LatticeShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_x(n: usize) -> DesignMatrix {
        DesignMatrix::new(nalgebra::DMatrix::identity(n, n)).unwrap()
    }

    fn random_problem(seed: u64, n: usize, dims: [usize; 4]) -> (DesignMatrix, Vec<f64>, Arc<PenaltyGraph>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = LatticeShape::full(dims).unwrap();
        let p = shape.p();
        let data: Vec<f64> = (0..n * p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x = DesignMatrix::from_row_major(n, p, &data).unwrap().standardize().unwrap();
        let beta: Vec<f64> = (0..p).map(|j| if j % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let y: Vec<f64> = x.matvec(&beta).iter().map(|v| v + 0.3 * (rng.random::<f64>() - 0.5)).collect();
        let g = Arc::new(laplacian(&lattice_adjacency(&shape, true).unwrap()).unwrap());
        (x, y, g)
    }

    #[test]
    fn elastic_net_update_on_orthonormal_design() {
        let x = identity_x(3);
        let y = [3.0, -0.2, -2.0];
        let g = PenaltyGraph::identity(3);
        for j in 0..3 {
            let v = coordinate_update_graphnet(j, &x, &y, &[0.0; 3], &g, 1.0, 0.5).unwrap();
            assert_eq!(v, soft_threshold(y[j], 0.5) / 1.5);
        }
        let v = coordinate_update_graphnet(0, &x, &y, &[0.0; 3], &g, 0.0, 0.0).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn decoupled_two_coordinate_example() {
        // Each coordinate minimizes (1/2)(y_j − b)² + (1/2)|b| + (1/2)b²
        // independently: b = S(y_j, 1/2)/2.
        let x = identity_x(2);
        let y = [3.0, 0.2];
        let spec = FitSpec::new(LossKind::Squared, Arc::new(PenaltyGraph::identity(2)))
            .lambda1(1.0)
            .lambda_g(1.0);
        let f = fit_graphnet(&x, &y, &spec).unwrap();
        assert_eq!(f.beta, vec![1.25, 0.0]);
        assert_eq!(f.active_set, vec![0]);
        assert!(f.converged);
    }

    #[test]
    fn zero_target_gives_zero_beta() {
        let (x, _, g) = random_problem(1, 20, [3, 2, 1, 1]);
        let spec = FitSpec::new(LossKind::Squared, g).lambda1(0.1).lambda_g(0.5);
        let f = fit(&x, &vec![0.0; 20], &spec).unwrap();
        assert!(f.beta.iter().all(|&b| b == 0.0));
        assert!(f.active_set.is_empty());
    }

    #[test]
    fn null_model_at_lambda_max() {
        let (x, y, g) = random_problem(2, 25, [3, 3, 1, 1]);
        let spec = FitSpec::new(LossKind::Squared, g).lambda_g(0.3);
        let lm = lambda_max(&x, &y, &spec).unwrap();
        let direct = (0..x.p())
            .map(|j| 2.0 * x.column(j).iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().abs())
            .fold(0.0, f64::max);
        assert!((lm - direct).abs() < 1e-12);
        let at = fit(&x, &y, &spec.clone().lambda1(lm)).unwrap();
        assert!(at.active_set.is_empty());
        let below = fit(&x, &y, &spec.lambda1(lm * 0.99)).unwrap();
        assert!(!below.active_set.is_empty());
    }

    #[test]
    fn objective_trace_monotone_and_kkt_all_losses() {
        for (seed, loss) in [
            (3, LossKind::Squared),
            (4, LossKind::Huber { delta: 0.1 }),
            (5, LossKind::HuberizedHinge { delta: 0.5 }),
        ] {
            let (x, mut y, g) = random_problem(seed, 30, [3, 2, 2, 1]);
            if loss.is_classification() {
                y = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            }
            let spec = FitSpec::new(loss, g).lambda1(0.2).lambda_g(0.7).lambda2(0.1).tol(1e-9);
            let f = fit(&x, &y, &spec).unwrap();
            assert!(f.converged, "{loss:?}");
            for w in f.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{loss:?}: {} -> {}", w[0], w[1]);
            }
            let v = kkt_violations(&x, &y, &spec, &f.beta, f.intercept).unwrap();
            assert!(v.iter().all(|&e| e <= 1e-8), "{loss:?}: {v:?}");
            let obj = objective_value(&spec, &x, &y, &f.beta, f.alpha.as_deref(), f.intercept).unwrap();
            assert!((obj.direct - f.objective()).abs() < 1e-9 * obj.direct.max(1.0));
            if let Some(aug) = obj.augmented {
                assert!((aug - obj.direct).abs() < 1e-8 * obj.direct.max(1.0));
            }
            let nz: Vec<usize> = (0..x.p()).filter(|&j| f.beta[j] != 0.0).collect();
            assert_eq!(nz, f.active_set);
        }
    }

    #[test]
    fn robust_single_observation() {
        // min (1/2)(10 − β − α)² + |α| with β unpenalized: β absorbs everything.
        let x = DesignMatrix::from_row_major(1, 1, &[1.0]).unwrap();
        let spec = FitSpec::new(LossKind::Huber { delta: 1.0 }, Arc::new(PenaltyGraph::zero(1))).tol(1e-12);
        let f = fit_robust(&x, &[10.0], &spec).unwrap();
        assert!((f.beta[0] - 10.0).abs() < 1e-12);
        assert_eq!(f.alpha.unwrap()[0], 0.0);
    }

    #[test]
    fn huber_with_large_delta_matches_squared() {
        let (x, y, g) = random_problem(6, 30, [2, 2, 2, 1]);
        let sq = FitSpec::new(LossKind::Squared, g.clone()).lambda1(0.05).lambda_g(0.5).tol(1e-12);
        let a = fit(&x, &y, &sq).unwrap();
        let mut hu = sq.clone();
        hu.loss = LossKind::Huber { delta: 100.0 };
        let b = fit(&x, &y, &hu).unwrap();
        assert!(b.alpha.as_ref().unwrap().iter().all(|&a| a == 0.0));
        for (u, v) in a.beta.iter().zip(&b.beta) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn adaptive_weights_and_errors() {
        let w = adaptive_weights(&[2.0, 0.5, 0.0]).unwrap();
        assert_eq!(w[..2], [0.5, 2.0]);
        assert!(w[2].is_infinite());
        assert!(adaptive_weights(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn adaptive_respects_pilot_support() {
        let (x, y, g) = random_problem(7, 40, [3, 3, 1, 1]);
        let spec = FitSpec::new(LossKind::Squared, g).lambda1(0.3).lambda_g(0.2).tol(1e-10);
        let pilot = fit(&x, &y, &spec).unwrap();
        let adaptive = fit_adaptive(&x, &y, &spec.clone().lambda1(0.05), &pilot).unwrap();
        for j in 0..x.p() {
            if pilot.beta[j] == 0.0 {
                assert_eq!(adaptive.beta[j], 0.0);
            }
        }
        // λ1* = 0 reduces to an unpenalized-ℓ1 fit restricted to the pilot support.
        let zero = fit_adaptive(&x, &y, &spec.clone().lambda1(0.0), &pilot).unwrap();
        let mut restricted = spec.clone().lambda1(0.0);
        restricted.penalty_weights =
            Some(pilot.beta.iter().map(|&b| if b == 0.0 { f64::INFINITY } else { 1.0 }).collect());
        let direct = fit(&x, &y, &restricted).unwrap();
        for (a, b) in zero.beta.iter().zip(&direct.beta) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn svgn_rejects_single_class() {
        let (x, _, g) = random_problem(8, 10, [2, 1, 1, 1]);
        let spec = FitSpec::new(LossKind::HuberizedHinge { delta: 0.5 }, g);
        assert!(matches!(fit_svgn(&x, &[1.0; 10], &spec), Err(Error::Label(_))));
    }

    #[test]
    fn svgn_null_model_predicts_majority() {
        let (x, y, g) = random_problem(9, 31, [2, 2, 1, 1]);
        let mut labels: Vec<f64> = y.iter().map(|v| if *v > 0.0 { 1.0 } else { -1.0 }).collect();
        for l in labels.iter_mut().take(20) {
            *l = 1.0;
        }
        let spec = FitSpec::new(LossKind::HuberizedHinge { delta: 0.5 }, g).lambda_g(0.1);
        let lm = lambda_max(&x, &labels, &spec).unwrap();
        let f = fit_svgn(&x, &labels, &spec.lambda1(lm * 1.01)).unwrap();
        assert!(f.active_set.is_empty());
        assert!(f.intercept > 0.0);
    }

    #[test]
    fn separable_svgn_has_zero_hinge_risk() {
        let x = DesignMatrix::from_row_major(2, 1, &[-1.0, 1.0]).unwrap();
        let y = [-1.0, 1.0];
        let spec = FitSpec::new(LossKind::HuberizedHinge { delta: 0.5 }, Arc::new(PenaltyGraph::zero(1)))
            .lambda1(1e-6)
            .tol(1e-12);
        let f = fit_svgn(&x, &y, &spec).unwrap();
        let obj = objective_value(&spec, &x, &y, &f.beta, f.alpha.as_deref(), f.intercept).unwrap();
        assert!(obj.risk < 1e-12);
        let margins: Vec<f64> = (0..2).map(|i| y[i] * (f.intercept + x.row(i)[0] * f.beta[0])).collect();
        // The smoothed hinge trades a margin shortfall of order δλ1 for a
        // smaller ℓ1 term.
        assert!(margins.iter().all(|&m| m >= 1.0 - 1e-6));
    }

    #[test]
    fn path_behaviour() {
        let (x, y, g) = random_problem(10, 40, [3, 3, 1, 2]);
        let spec = FitSpec::new(LossKind::Squared, g).lambda_g(0.5).tol(1e-10);
        let lm = lambda_max(&x, &y, &spec).unwrap();
        let path = fit_path(&x, &y, &spec, &[lm, lm / 2.0], None).unwrap();
        assert!(path.fits[0].active_set.is_empty());
        let cold = fit(&x, &y, &spec.clone().lambda1(lm / 2.0)).unwrap();
        assert!((cold.objective() - path.fits[1].objective()).abs() < 1e-6);

        let mut capped = spec.clone();
        capped.density_cap = 0.0;
        let p = fit_path(&x, &y, &capped, &default_path(lm, 10, 0.01), None).unwrap();
        assert!(p.fits.iter().all(|f| f.active_set.is_empty()));
        assert_eq!(p.stop, PathStop::DensityCap(1));

        assert!(fit_path(&x, &y, &spec, &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn default_path_endpoints() {
        let p = default_path(10.0, 90, 0.01);
        assert_eq!(p.len(), 90);
        assert!((p[0] - 10.0).abs() < 1e-12 && (p[89] - 0.1).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
        let g = integer_lambda_grid();
        assert_eq!((g.len(), g[0], g[89]), (90, 99.0, 10.0));
    }

    #[test]
    fn spec_validation() {
        let g = Arc::new(PenaltyGraph::zero(2));
        let x = identity_x(2);
        let bad = FitSpec::new(LossKind::Squared, g.clone()).lambda1(-1.0);
        assert!(matches!(fit(&x, &[1.0, 1.0], &bad), Err(Error::Parameter(_))));
        let mut bad = FitSpec::new(LossKind::Squared, g.clone());
        bad.with_intercept = true;
        assert!(fit(&x, &[1.0, 1.0], &bad).is_err());
        let wrong = FitSpec::new(LossKind::Squared, Arc::new(PenaltyGraph::zero(3)));
        assert!(matches!(fit(&x, &[1.0, 1.0], &wrong), Err(Error::Shape(_))));
        let zero_col = DesignMatrix::from_row_major(2, 2, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        let spec = FitSpec::new(LossKind::Squared, g);
        assert!(matches!(fit(&zero_col, &[1.0, 1.0], &spec), Err(Error::DegenerateCoordinate(1))));
    }
}
