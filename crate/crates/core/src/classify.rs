//! Binary classifiers built on the regression engine.
//!
//! Sparse penalized discriminant analysis (SPDA) regresses optimal class
//! scores on the features and thresholds the fitted scores at the midpoint of
//! the two class means. Support-vector GraphNet fits the huberized hinge with
//! an intercept directly on the ±1 labels.
//!
//! Training columns are centered and scaled to unit norm before fitting. The
//! stored model maps back to raw feature space: the decision value of `x` is
//! `xᵀβ` and the predicted class is `+1` when the decision value is at least
//! the stored threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::PenaltyGraph;
use crate::losses::LossKind;
use crate::solver::{self, FitResult, FitSpec};
use crate::tensor_io::{check_binary_labels, DesignMatrix};

/// Two-class optimal scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTargets {
    /// Row `i` is `[1, 0]` for class −1 and `[0, 1]` for class +1.
    pub indicator: Vec<[u8; 2]>,
    /// Scores `(θ₋, θ₊)`.
    pub theta: [f64; 2],
    pub scored: Vec<f64>,
}

/// Scores with `Σ scored = 0` and `n⁻¹ Σ scored² = 1`, positive for class +1.
pub fn optimal_scores(labels: &[f64]) -> Result<ScoredTargets> {
    check_binary_labels(labels)?;
    let n_pos = labels.iter().filter(|&&l| l > 0.0).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let theta = [-(n_pos / n_neg).sqrt(), (n_neg / n_pos).sqrt()];
    let indicator = labels.iter().map(|&l| if l > 0.0 { [0, 1] } else { [1, 0] }).collect();
    let scored = labels.iter().map(|&l| if l > 0.0 { theta[1] } else { theta[0] }).collect();
    Ok(ScoredTargets { indicator, theta, scored })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    SpdaGraphnet,
    SpdaRobust,
    /// Adaptive reweighting on top of a squared or Huber pilot fit.
    SpdaAdaptive,
    Svgn,
    LinearSvm,
}

impl Variant {
    pub fn uses_delta(self) -> bool {
        !matches!(self, Variant::SpdaGraphnet)
    }

    pub fn is_svm(self) -> bool {
        matches!(self, Variant::Svgn | Variant::LinearSvm)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::SpdaGraphnet => "spda-graphnet",
            Variant::SpdaRobust => "spda-robust",
            Variant::SpdaAdaptive => "spda-adaptive",
            Variant::Svgn => "svgn",
            Variant::LinearSvm => "linear-svm",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spda-graphnet" => Variant::SpdaGraphnet,
            "spda-robust" => Variant::SpdaRobust,
            "spda-adaptive" => Variant::SpdaAdaptive,
            "svgn" => Variant::Svgn,
            "linear-svm" => Variant::LinearSvm,
            other => return Err(Error::Parameter(format!("unknown classifier variant '{other}'"))),
        })
    }
}

/// A classifier variant with its penalties.
#[derive(Debug, Clone)]
pub struct ClassifierSpec {
    pub variant: Variant,
    /// Penalties and loss. For the adaptive variant these define the pilot.
    pub fit: FitSpec,
    /// ℓ1 weight of the adaptive refit.
    pub lambda1_star: f64,
}

impl ClassifierSpec {
    pub fn new(variant: Variant, fit: FitSpec) -> Self {
        Self { variant, fit, lambda1_star: 1.0 }
    }

    /// The engine spec actually solved for this variant.
    fn engine_spec(&self) -> Result<FitSpec> {
        let mut s = self.fit.clone();
        match self.variant {
            Variant::SpdaGraphnet => {
                s.loss = LossKind::Squared;
                s.with_intercept = false;
            }
            Variant::SpdaRobust => {
                if !matches!(s.loss, LossKind::Huber { .. }) {
                    return Err(Error::Parameter("spda-robust needs a Huber loss".into()));
                }
                s.with_intercept = false;
            }
            Variant::SpdaAdaptive => {
                if s.loss.is_classification() {
                    return Err(Error::Parameter("spda-adaptive needs a squared or Huber loss".into()));
                }
                s.with_intercept = false;
            }
            Variant::Svgn => {
                if !s.loss.is_classification() {
                    return Err(Error::Parameter("svgn needs the huberized-hinge loss".into()));
                }
                s.with_intercept = true;
            }
            Variant::LinearSvm => {
                // ℓ2-penalized huberized hinge: no ℓ1 term, no graph.
                if !s.loss.is_classification() {
                    return Err(Error::Parameter("linear-svm needs the huberized-hinge loss".into()));
                }
                let ridge = s.lambda2 + s.lambda_g;
                if !(ridge > 0.0) {
                    return Err(Error::Parameter("linear-svm needs a positive ridge weight".into()));
                }
                s.graph = Arc::new(PenaltyGraph::zero(s.graph.size()));
                s.lambda1 = 0.0;
                s.lambda_g = ridge;
                s.lambda2 = ridge;
                s.with_intercept = true;
            }
        }
        Ok(s)
    }
}

/// A fitted binary classifier in raw feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub variant: Variant,
    pub beta: Vec<f64>,
    pub threshold: f64,
    /// Intercept of the standardized fit (support-vector variants).
    pub intercept: f64,
    /// Accuracy on the rows the model was trained on.
    pub train_accuracy: f64,
    /// Training column means and norms used for standardization.
    pub means: Vec<f64>,
    pub norms: Vec<f64>,
    /// Coefficients on the standardized scale.
    pub beta_std: Vec<f64>,
}

/// Labels and decision values for a batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<f64>,
    pub decision: Vec<f64>,
}

impl ClassifierModel {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn decision_values(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        if x.p() != self.p() {
            return Err(Error::Shape(format!("model has {} features, data has {}", self.p(), x.p())));
        }
        Ok(x.matvec(&self.beta))
    }

    pub fn predict(&self, x: &DesignMatrix) -> Result<Prediction> {
        let decision = self.decision_values(x)?;
        let labels = decision.iter().map(|&d| self.label_of(d)).collect();
        Ok(Prediction { labels, decision })
    }

    pub fn label_of(&self, decision: f64) -> f64 {
        if decision - self.threshold >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn accuracy(&self, x: &DesignMatrix, labels: &[f64]) -> Result<f64> {
        let pred = self.predict(x)?;
        accuracy(&pred.labels, labels)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s.push_str(&format!("variant = {}\n", self.variant));
        s.push_str(&format!("p = {}\n", self.p()));
        s.push_str(&format!("threshold = {}\n", self.threshold));
        s.push_str(&format!("intercept = {}\n", self.intercept));
        s.push_str(&format!("train_accuracy = {}\n", self.train_accuracy));
        s.push_str(&format!("means = {}\n", join(&self.means)));
        s.push_str(&format!("norms = {}\n", join(&self.norms)));
        s.push_str("beta\n");
        for b in &self.beta {
            s.push_str(&format!("{b}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut header = BTreeMap::new();
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "beta" {
                break;
            }
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("model header line '{line}' is not key = value")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| header.get(k).ok_or_else(|| Error::Format(format!("model file missing '{k}'")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Format(format!("model field '{k}' is not a number")))
        };
        let list = |k: &str| -> Result<Vec<f64>> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::Format(format!("bad value in model field '{k}'"))))
                .collect()
        };
        let variant: Variant = get("variant")?.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
        let p: usize = get("p")?.parse().map_err(|_| Error::Format("model field 'p' is not an integer".into()))?;
        let beta: Vec<f64> = lines
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse().map_err(|_| Error::Format(format!("bad coefficient '{l}'"))))
            .collect::<Result<_>>()?;
        let (means, norms) = (list("means")?, list("norms")?);
        if beta.len() != p || means.len() != p || norms.len() != p {
            return Err(Error::Format(format!("model declares p = {p} but lists disagree")));
        }
        let beta_std = beta.iter().zip(&norms).map(|(b, s)| b * s).collect();
        Ok(Self {
            variant,
            beta,
            threshold: num("threshold")?,
            intercept: num("intercept")?,
            train_accuracy: num("train_accuracy")?,
            means,
            norms,
            beta_std,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_text()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_text(&text)
    }
}

pub fn accuracy(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Training data after centering, scaling and target coding.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x: DesignMatrix,
    pub means: Vec<f64>,
    pub labels: Vec<f64>,
    /// Regression target: optimal scores for SPDA, the labels for SVMs.
    pub target: Vec<f64>,
}

pub fn prepare(x: &DesignMatrix, labels: &[f64], variant: Variant) -> Result<Prepared> {
    if labels.len() != x.n() {
        return Err(Error::Shape(format!("X has {} rows but {} labels", x.n(), labels.len())));
    }
    let target = if variant.is_svm() {
        check_binary_labels(labels)?;
        labels.to_vec()
    } else {
        optimal_scores(labels)?.scored
    };
    let (centered, means) = x.center();
    Ok(Prepared { x: centered.standardize()?, means, labels: labels.to_vec(), target })
}

impl Prepared {
    /// First-stage fit: the final fit for every variant except the adaptive
    /// one, where it is the pilot.
    pub fn pilot(&self, spec: &ClassifierSpec, warm: Option<&FitResult>) -> Result<FitResult> {
        solver::fit_warm(&self.x, &self.target, &spec.engine_spec()?, warm)
    }

    /// Complete the fit from a first-stage result and build the model.
    pub fn finish(&self, spec: &ClassifierSpec, first: &FitResult) -> Result<ClassifierModel> {
        let fit = if spec.variant == Variant::SpdaAdaptive {
            let mut s = spec.engine_spec()?;
            s.lambda1 = spec.lambda1_star;
            solver::fit_adaptive(&self.x, &self.target, &s, first)?
        } else {
            first.clone()
        };
        Ok(self.model(spec.variant, &fit))
    }

    pub fn fit(&self, spec: &ClassifierSpec) -> Result<ClassifierModel> {
        let first = self.pilot(spec, None)?;
        self.finish(spec, &first)
    }

    fn model(&self, variant: Variant, fit: &FitResult) -> ClassifierModel {
        let norms = self.x.column_norms().to_vec();
        let beta: Vec<f64> = fit.beta.iter().zip(&norms).map(|(b, s)| b / s).collect();
        let offset: f64 = self.means.iter().zip(&beta).map(|(m, b)| m * b).sum();
        let threshold = if variant.is_svm() {
            offset - fit.intercept
        } else {
            let scores = self.x.matvec(&fit.beta);
            let (mut sp, mut np, mut sn, mut nn) = (0.0, 0.0, 0.0, 0.0);
            for (s, l) in scores.iter().zip(&self.labels) {
                if *l > 0.0 {
                    sp += s;
                    np += 1.0;
                } else {
                    sn += s;
                    nn += 1.0;
                }
            }
            0.5 * (sp / np + sn / nn) + offset
        };
        let mut model = ClassifierModel {
            variant,
            beta,
            threshold,
            intercept: fit.intercept,
            train_accuracy: 0.0,
            means: self.means.clone(),
            norms,
            beta_std: fit.beta.clone(),
        };
        // Decision values of the training rows, recovered from the
        // standardized fit so no raw copy is kept.
        let fitted = self.x.matvec(&fit.beta);
        let hits = fitted
            .iter()
            .zip(&self.labels)
            .filter(|(f, l)| model.label_of(**f + offset) == **l)
            .count();
        model.train_accuracy = hits as f64 / self.labels.len() as f64;
        model
    }
}

/// Fit a classifier on raw training data.
pub fn fit_classifier(x: &DesignMatrix, labels: &[f64], spec: &ClassifierSpec) -> Result<ClassifierModel> {
    prepare(x, labels, spec.variant)?.fit(spec)
}

/// SPDA with the squared, Huber or adaptive engine.
pub fn fit_spda(x: &DesignMatrix, labels: &[f64], spec: &ClassifierSpec) -> Result<ClassifierModel> {
    if spec.variant.is_svm() {
        return Err(Error::Parameter(format!("{} is not an SPDA variant", spec.variant)));
    }
    fit_classifier(x, labels, spec)
}

/// Per-group class-balanced resampling.
///
/// For every group (in ascending id order) draws `per_class` indices of each
/// class: without replacement when enough exist, with replacement otherwise.
/// Positives come before negatives within a group.
pub fn balanced_resample(labels: &[f64], groups: &[u32], per_class: usize, seed: u64) -> Result<Vec<usize>> {
    if labels.len() != groups.len() {
        return Err(Error::Shape(format!("{} labels but {} group ids", labels.len(), groups.len())));
    }
    let mut by_group: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, (&l, &g)) in labels.iter().zip(groups).enumerate() {
        let e = by_group.entry(g).or_default();
        if l == 1.0 {
            e.0.push(i);
        } else if l == -1.0 {
            e.1.push(i);
        } else {
            return Err(Error::Label(format!("label {l} at row {} is not -1 or +1", i + 1)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(by_group.len() * 2 * per_class);
    for (g, (pos, neg)) in &by_group {
        for (class, idx) in [("+1", pos), ("-1", neg)] {
            if idx.is_empty() {
                return Err(Error::Resample(format!("group {g} has no trials of class {class}")));
            }
            if idx.len() >= per_class {
                out.extend(sample(&mut rng, idx.len(), per_class).into_iter().map(|k| idx[k]));
            } else {
                out.extend((0..per_class).map(|_| idx[rng.random_range(0..idx.len())]));
            }
        }
    }
    Ok(out)
}

/// Downsample the majority class to the minority count; sorted indices.
pub fn downsample_majority(labels: &[f64], seed: u64) -> Result<Vec<usize>> {
    check_binary_labels(labels)?;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0.0).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] < 0.0).collect();
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = minority.clone();
    out.extend(sample(&mut rng, majority.len(), minority.len()).into_iter().map(|k| majority[k]));
    out.sort_unstable();
    Ok(out)
}
