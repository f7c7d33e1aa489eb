//! Multinomial logistic regression, trained from scratch.
//!
//! Training minimizes mean cross-entropy plus an L2 penalty on the weights
//! with L-BFGS from an all-zero start. Inputs are standardized with
//! statistics stored in the model, so a saved model predicts on raw feature
//! vectors. Classes are kept in lexicographic order; that order fixes the
//! weight rows and breaks argmax ties.

mod lbfgs;
mod objective;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lbfgs::Termination;
pub use objective::{loss_and_gradient, Design, Params};

use crate::features::{self, SpanMode, DEFAULT_SPAN_LENGTH, GLOBAL_FEATURES};
use crate::{fsutil, Error, Result};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub l2_strength: f64,
    /// Stop once the max-norm of the gradient falls below this.
    pub convergence_tol: f64,
    /// Recorded for provenance. The convex fit itself starts from zeros and
    /// does not consume randomness.
    pub seed: u64,
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            l2_strength: 1.0,
            convergence_tol: 1e-6,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.l2_strength >= 0.0 && self.l2_strength.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "l2_strength must be finite and >= 0, got {}",
                self.l2_strength
            )));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::InvalidConfig("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub version: u32,
    pub classes: Vec<String>,
    pub feature_dim: usize,
    pub span_length: usize,
    #[serde(default)]
    pub span_mode: SpanMode,
    pub standardize: bool,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub train_config: TrainConfig,
}

/// What happened during a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub iterations: usize,
    pub final_loss: f64,
    pub grad_max_norm: f64,
    pub converged: bool,
    pub termination: Termination,
    /// Objective before the first step and after each iteration.
    pub loss_history: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Column means and population standard deviations. Zero-variance columns get
/// a standard deviation of 1; their indices are returned.
fn column_stats(x: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let n = x.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    let mut flat = Vec::new();
    for j in 0..dim {
        let shift = x[0][j];
        let m = x.iter().map(|r| r[j] - shift).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[j] - shift - m).powi(2)).sum::<f64>() / n;
        mean[j] = shift + m;
        if var > 0.0 {
            std[j] = var.sqrt();
        } else {
            std[j] = 1.0;
            flat.push(j);
        }
    }
    (mean, std, flat)
}

/// Fits a model on feature rows `x` with string labels `y`. Every label must
/// be in `label_set`; the model's classes are the labels that occur in `y`.
pub fn train<S: AsRef<str>>(
    x: &[Vec<f64>],
    y: &[S],
    label_set: &[String],
    cfg: &TrainConfig,
) -> Result<(LogRegModel, TrainSummary)> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            predictions: x.len(),
            gold: y.len(),
        });
    }
    let dim = x.first().ok_or(Error::NoDocuments)?.len();
    if dim == 0 {
        return Err(Error::InvalidConfig("feature vectors are empty".into()));
    }
    if let Some(row) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: row.len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix"));
    }
    for label in y {
        let label = label.as_ref();
        if !label_set.iter().any(|l| l == label) {
            return Err(Error::UnknownClass(label.to_string()));
        }
    }
    let classes: Vec<String> = y
        .iter()
        .map(|l| l.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::TooFewClasses(classes.len()));
    }
    let targets: Vec<usize> = y
        .iter()
        .map(|l| {
            classes
                .binary_search_by(|c| c.as_str().cmp(l.as_ref()))
                .expect("class present")
        })
        .collect();

    let mut warnings = Vec::new();
    let (feature_mean, feature_std) = if cfg.standardize {
        let (mean, std, flat) = column_stats(x, dim);
        if !flat.is_empty() {
            warnings.push(format!(
                "zero-variance features {flat:?}: standard deviation clamped to 1"
            ));
        }
        (mean, std)
    } else {
        (vec![0.0; dim], vec![1.0; dim])
    };
    let design_x: Vec<f64> = x
        .iter()
        .flat_map(|row| {
            row.iter()
                .zip(feature_mean.iter().zip(&feature_std))
                .map(|(v, (m, s))| (v - m) / s)
        })
        .collect();
    let design = Design::new(&design_x, dim, &targets)?;

    let n_classes = classes.len();
    let l2 = cfg.l2_strength;
    let outcome = lbfgs::minimize(
        |theta| {
            let params = Params::from_flat(n_classes, dim, theta);
            let (loss, grad) = loss_and_gradient(&params, &design, l2).expect("validated design");
            (loss, grad.to_flat())
        },
        Params::zeros(n_classes, dim).to_flat(),
        cfg.max_iterations,
        cfg.convergence_tol,
    );
    let converged = outcome.termination == Termination::Converged;
    if !converged {
        warnings.push(format!(
            "not converged after {} iterations ({:?}, gradient max-norm {:.3e})",
            outcome.iterations, outcome.termination, outcome.grad_max_norm
        ));
    }
    let params = Params::from_flat(n_classes, dim, &outcome.x);
    // Best guess from the width; pipelines overwrite it via with_feature_config.
    let spans = dim.saturating_sub(GLOBAL_FEATURES);
    let (span_mode, span_length) = if spans >= 4 && spans % 2 == 0 {
        (SpanMode::MinMax, spans / 2)
    } else {
        (SpanMode::None, DEFAULT_SPAN_LENGTH)
    };
    let model = LogRegModel {
        version: MODEL_VERSION,
        weights: (0..n_classes).map(|c| params.row(c).to_vec()).collect(),
        bias: params.bias.clone(),
        classes,
        feature_dim: dim,
        span_length,
        span_mode,
        standardize: cfg.standardize,
        feature_mean,
        feature_std,
        train_config: *cfg,
    };
    let summary = TrainSummary {
        iterations: outcome.iterations,
        final_loss: outcome.loss,
        grad_max_norm: outcome.grad_max_norm,
        converged,
        termination: outcome.termination,
        loss_history: outcome.loss_history,
        warnings,
    };
    Ok((model, summary))
}

impl LogRegModel {
    /// Records the featurization the model was trained on.
    pub fn with_feature_config(mut self, cfg: &features::FeatureConfig) -> Self {
        self.span_length = cfg.span_length;
        self.span_mode = cfg.span_mode;
        self
    }

    /// The featurization matching this model; `seed` only matters for random
    /// spans.
    pub fn feature_config(&self, seed: u64, strict_short_docs: bool) -> features::FeatureConfig {
        features::FeatureConfig {
            span_length: self.span_length,
            span_mode: self.span_mode,
            seed,
            strict_short_docs,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Pre-softmax class scores.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        let z: Vec<f64> = if self.standardize {
            x.iter()
                .zip(self.feature_mean.iter().zip(&self.feature_std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        } else {
            x.to_vec()
        };
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(&z).map(|(wi, zi)| wi * zi).sum::<f64>())
            .collect())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores(x)?))
    }

    /// Most probable class; ties go to the earliest class.
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let scores = self.scores(x)?;
        Ok(&self.classes[argmax(&scores)])
    }

    fn check(&self) -> std::result::Result<(), String> {
        let c = self.classes.len();
        let d = self.feature_dim;
        if c < 2 {
            return Err(format!("{c} classes"));
        }
        if self.weights.len() != c || self.bias.len() != c {
            return Err(format!("expected {c} weight rows and biases"));
        }
        if self.weights.iter().any(|r| r.len() != d) {
            return Err(format!("weight rows must have {d} columns"));
        }
        if self.feature_mean.len() != d || self.feature_std.len() != d {
            return Err(format!("standardization statistics must have {d} entries"));
        }
        if self.standardize && self.feature_std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err("feature_std entries must be positive".into());
        }
        let all = self
            .weights
            .iter()
            .flatten()
            .chain(&self.bias)
            .chain(&self.feature_mean)
            .chain(&self.feature_std);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        if self.span_mode != SpanMode::None && features::feature_dim(self.span_mode, self.span_length) != d {
            return Err(format!(
                "span_length {} does not match feature_dim {d}",
                self.span_length
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        match value.get("version") {
            Some(v) if v.as_u64() == Some(u64::from(MODEL_VERSION)) => {}
            Some(v) => {
                let shown = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
                return Err(Error::UnsupportedModelVersion(shown));
            }
            None => return Err(Error::CorruptModel("missing version".into())),
        }
        let model: LogRegModel = serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
        model.check().map_err(Error::CorruptModel)?;
        Ok(model)
    }
}

pub fn save_model(model: &LogRegModel, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, model.to_json()?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<LogRegModel> {
    LogRegModel::from_json(&fsutil::read_to_string(path)?)
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = objective::log_sum_exp(scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
