//! Scalar loss kernels, thresholding operators and full objective evaluation.
//!
//! Conventions shared by every variant:
//!
//! - risks are sums over observations, not averages;
//! - the squared-error risk carries a factor 1/2;
//! - penalties carry the same 1/2, so the objective is
//!   `risk + (λ1/2) Σ w_j |β_j| + (λG/2) βᵀ G̃ β`
//!   where `G̃` is the penalty graph after its diagonal shift.
//!
//! With these conventions the coordinate minimizer is
//! `S(ρ_j, λ1 w_j / 2) / (X_jᵀX_j + λG G̃_jj)`.

use crate::error::{Error, Result};
use crate::solver::FitSpec;
use crate::tensor_io::DesignMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Squared,
    Huber { delta: f64 },
    HuberizedHinge { delta: f64 },
}

impl LossKind {
    pub fn delta(&self) -> Option<f64> {
        match *self {
            LossKind::Squared => None,
            LossKind::Huber { delta } | LossKind::HuberizedHinge { delta } => Some(delta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.delta() {
            Some(d) if !(d > 0.0 && d.is_finite()) => {
                Err(Error::Parameter(format!("delta must be positive and finite, got {d}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, LossKind::HuberizedHinge { .. })
    }

    /// Per-observation loss at residual `r` (regression) or margin `m`
    /// (classification).
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            LossKind::Squared => 0.5 * r * r,
            LossKind::Huber { delta } => huber(r, delta),
            LossKind::HuberizedHinge { delta } => huberized_hinge(r, delta),
        }
    }

    /// Derivative of [`LossKind::value`].
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            LossKind::Squared => r,
            LossKind::Huber { delta } => huber_derivative(r, delta),
            LossKind::HuberizedHinge { delta } => huberized_hinge_derivative(r, delta),
        }
    }
}

/// `sign(x)·max(|x| − γ, 0)`.
#[inline]
pub fn soft_threshold(x: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if x > gamma {
        x - gamma
    } else if x < -gamma {
        x + gamma
    } else {
        0.0
    }
}

/// Huber loss: `r²/2` for `|r| ≤ δ`, else `δ|r| − δ²/2`.
#[inline]
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * a - 0.5 * delta * delta
    }
}

/// `ψ_δ(r) = clamp(r, −δ, δ)`.
#[inline]
pub fn huber_derivative(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

/// Huberized hinge at margin `m = y·ŷ`: zero past 1, quadratic on
/// `(1−δ, 1]`, linear below.
#[inline]
pub fn huberized_hinge(margin: f64, delta: f64) -> f64 {
    if margin > 1.0 {
        0.0
    } else if margin > 1.0 - delta {
        (1.0 - margin).powi(2) / (2.0 * delta)
    } else {
        1.0 - margin - delta / 2.0
    }
}

#[inline]
pub fn huberized_hinge_derivative(margin: f64, delta: f64) -> f64 {
    if margin > 1.0 {
        0.0
    } else if margin > 1.0 - delta {
        -(1.0 - margin) / delta
    } else {
        -1.0
    }
}

/// Residual-shrink operator `H`: `x − δ` if `x < 1`, else `x`.
///
/// The support-vector solver does not call this; it uses the exact
/// minimizer [`hinge_aux_update`] of the same augmented coordinate problem.
#[inline]
pub fn residual_shrink_h(x: f64, delta: f64) -> f64 {
    if x < 1.0 {
        x - delta
    } else {
        x
    }
}

/// Exact minimizer over `a` of `(u − a)²/(2δ) + max(0, a)`.
///
/// Its optimal value is the huberized hinge at margin `1 − u`.
#[inline]
pub fn hinge_aux_update(u: f64, delta: f64) -> f64 {
    if u > delta {
        u - delta
    } else if u >= 0.0 {
        0.0
    } else {
        u
    }
}

/// Objective evaluated at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    /// Risk on the original loss plus penalties.
    pub direct: f64,
    /// Quadratic augmented form at the supplied auxiliary variables, when
    /// they were supplied (robust and support-vector variants).
    pub augmented: Option<f64>,
    pub risk: f64,
    pub penalty: f64,
}

/// `(λ1/2) Σ w_j |β_j| + (λG/2) βᵀG̃β`.
pub fn penalty_value(spec: &FitSpec, beta: &[f64]) -> Result<f64> {
    let g = spec.graph.shift_diagonal(spec.lambda2, spec.lambda_g)?;
    if beta.len() != g.size() {
        return Err(Error::Shape(format!(
            "coefficient vector has length {}, graph has size {}",
            beta.len(),
            g.size()
        )));
    }
    let mut l1 = 0.0;
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            let w = spec.penalty_weights.as_ref().map_or(1.0, |w| w[j]);
            l1 += w * b.abs();
        }
    }
    let quad = if spec.lambda_g > 0.0 { g.quad_form(beta) } else { 0.0 };
    Ok(0.5 * spec.lambda1 * l1 + 0.5 * spec.lambda_g * quad)
}

/// Full penalized objective for `spec`'s loss at `(β, α, β0)`.
///
/// For the Huber loss the augmented form is
/// `(1/2)‖y − Xβ − α‖² + δ‖α‖₁ + penalty`, and for the huberized hinge
/// `(1/2δ)‖1 − y∘(β0 + Xβ) − α‖² + Σ max(0, α_i) + penalty`. Minimizing
/// either over `α` recovers the direct form.
pub fn objective_value(
    spec: &FitSpec,
    x: &DesignMatrix,
    y: &[f64],
    beta: &[f64],
    alpha: Option<&[f64]>,
    intercept: f64,
) -> Result<ObjectiveValue> {
    let (n, p) = (x.n(), x.p());
    if y.len() != n || beta.len() != p {
        return Err(Error::Shape(format!(
            "X is {n}x{p} but y has length {} and beta length {}",
            y.len(),
            beta.len()
        )));
    }
    if let Some(a) = alpha {
        if a.len() != n {
            return Err(Error::Shape(format!("alpha has length {}, expected {n}", a.len())));
        }
    }
    let penalty = penalty_value(spec, beta)?;
    let fitted = x.matvec(beta);
    let (risk, augmented) = match spec.loss {
        LossKind::Squared => {
            let risk: f64 = y.iter().zip(&fitted).map(|(y, f)| 0.5 * (y - f).powi(2)).sum();
            let aug = alpha.map(|a| {
                y.iter().zip(&fitted).zip(a).map(|((y, f), a)| 0.5 * (y - f - a).powi(2)).sum::<f64>()
            });
            (risk, aug)
        }
        LossKind::Huber { delta } => {
            let risk = y.iter().zip(&fitted).map(|(y, f)| huber(y - f, delta)).sum();
            let aug = alpha.map(|a| {
                y.iter()
                    .zip(&fitted)
                    .zip(a)
                    .map(|((y, f), a)| 0.5 * (y - f - a).powi(2) + delta * a.abs())
                    .sum::<f64>()
            });
            (risk, aug)
        }
        LossKind::HuberizedHinge { delta } => {
            let margins: Vec<f64> = y.iter().zip(&fitted).map(|(y, f)| y * (intercept + f)).collect();
            let risk = margins.iter().map(|&m| huberized_hinge(m, delta)).sum();
            let aug = alpha.map(|a| {
                margins
                    .iter()
                    .zip(a)
                    .map(|(m, a)| (1.0 - m - a).powi(2) / (2.0 * delta) + a.max(0.0))
                    .sum::<f64>()
            });
            (risk, aug)
        }
    };
    Ok(ObjectiveValue {
        direct: risk + penalty,
        augmented: augmented.map(|a| a + penalty),
        risk,
        penalty,
    })
}
