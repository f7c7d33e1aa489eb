//! Featurize → train → predict/evaluate, over documents or precomputed
//! feature rows.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::classifier::{self, LogRegModel, TrainConfig, TrainSummary};
use crate::eval::{self, EvalReport};
use crate::features::{self, FeatureConfig, FeatureMatrix, FeatureRow};
use crate::surprisal_io::{self, DatasetManifest, SurprisalSequence};
use crate::{fsutil, Error, Result};

#[derive(Debug, Clone)]
pub struct Fit {
    pub model: LogRegModel,
    pub summary: TrainSummary,
    pub features: FeatureMatrix,
}

fn labels_of(rows: &[FeatureRow]) -> Result<Vec<&str>> {
    rows.iter()
        .map(|r| {
            r.label.as_deref().ok_or_else(|| Error::MissingLabel {
                doc_id: r.doc_id.clone(),
            })
        })
        .collect()
}

/// Trains on documents, skipping (and listing) those that cannot be
/// featurized.
pub fn fit(
    docs: &[SurprisalSequence],
    label_set: &[String],
    feature_cfg: &FeatureConfig,
    train_cfg: &TrainConfig,
) -> Result<Fit> {
    feature_cfg.validate()?;
    let matrix = features::featurize_corpus(docs, feature_cfg);
    fit_matrix(matrix, label_set, feature_cfg, train_cfg)
}

/// Trains on already featurized rows. `feature_cfg` must describe how the rows
/// were produced.
pub fn fit_matrix(
    matrix: FeatureMatrix,
    label_set: &[String],
    feature_cfg: &FeatureConfig,
    train_cfg: &TrainConfig,
) -> Result<Fit> {
    if matrix.rows.is_empty() {
        return Err(Error::NoDocuments);
    }
    let expected = feature_cfg.feature_dim();
    if let Some(row) = matrix.rows.iter().find(|r| r.features.len() != expected) {
        return Err(Error::DimensionMismatch {
            expected,
            actual: row.features.len(),
        });
    }
    let labels = labels_of(&matrix.rows)?;
    let (model, summary) = classifier::train(&matrix.features(), &labels, label_set, train_cfg)?;
    Ok(Fit {
        model: model.with_feature_config(feature_cfg),
        summary,
        features: matrix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub pred: String,
    pub proba: BTreeMap<String, f64>,
}

pub fn predict_rows(model: &LogRegModel, rows: &[FeatureRow]) -> Result<Vec<Prediction>> {
    rows.iter()
        .map(|row| {
            let proba = model.predict_proba(&row.features)?;
            let pred = model.predict(&row.features)?.to_string();
            Ok(Prediction {
                doc_id: row.doc_id.clone(),
                pred,
                proba: model.classes.iter().cloned().zip(proba).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
    pub features: FeatureMatrix,
}

/// Featurizes `docs` the way `model` expects and scores its predictions.
pub fn evaluate(
    model: &LogRegModel,
    docs: &[SurprisalSequence],
    label_set: &[String],
    seed: u64,
    strict_short_docs: bool,
) -> Result<Evaluation> {
    let cfg = model.feature_config(seed, strict_short_docs);
    evaluate_matrix(model, features::featurize_corpus(docs, &cfg), label_set)
}

pub fn evaluate_matrix(model: &LogRegModel, matrix: FeatureMatrix, label_set: &[String]) -> Result<Evaluation> {
    if matrix.rows.is_empty() {
        return Err(Error::NoDocuments);
    }
    let gold = labels_of(&matrix.rows)?;
    let predictions = predict_rows(model, &matrix.rows)?;
    let predicted: Vec<&str> = predictions.iter().map(|p| p.pred.as_str()).collect();
    let report = eval::f1_report(&predicted, &gold, label_set)?;
    Ok(Evaluation {
        report,
        predictions,
        features: matrix,
    })
}

/// Feature rows for one manifest split plus human-readable notes about
/// dropped documents.
#[derive(Debug, Clone, Default)]
pub struct SplitFeatures {
    pub matrix: FeatureMatrix,
    pub warnings: Vec<String>,
}

/// Loads a labeled split as feature rows. Each file may be a surprisal file,
/// which is featurized with `cfg`, or a feature file written by
/// [`features::write_feature_file`], which is used as is.
pub fn load_split_features(manifest: &DatasetManifest, split: &str, cfg: &FeatureConfig) -> Result<SplitFeatures> {
    let files = manifest
        .splits
        .get(split)
        .ok_or_else(|| Error::UnknownSplit(split.to_string()))?;
    let mut out = SplitFeatures::default();
    let mut seen = HashSet::new();
    let mut keep = |row: &FeatureRow, out: &mut SplitFeatures| -> Result<()> {
        surprisal_io::check_label(manifest, &row.doc_id, row.label.as_deref())?;
        if !seen.insert(row.doc_id.clone()) {
            return Err(Error::DuplicateDocId(row.doc_id.clone()));
        }
        out.matrix.rows.push(row.clone());
        Ok(())
    };
    for file in files {
        let contents = fsutil::read_to_string(file)?;
        if features::looks_like_feature_file(&contents) {
            for row in features::parse_feature_str(&contents, file)? {
                keep(&row, &mut out)?;
            }
            continue;
        }
        let parsed = surprisal_io::parse_surprisal_str(&contents, file)?;
        for reject in &parsed.rejects {
            out.warnings.push(format!("{}: {reject}", file.display()));
        }
        for doc in &parsed.documents {
            surprisal_io::check_label(manifest, &doc.doc_id, doc.label.as_deref())?;
        }
        let matrix = features::featurize_corpus(&parsed.documents, cfg);
        for skip in &matrix.skipped {
            out.warnings
                .push(format!("{}: skipped {}: {}", file.display(), skip.doc_id, skip.reason));
        }
        for row in &matrix.rows {
            keep(row, &mut out)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SpanMode;
    use crate::synth::{AuthorProfile, CorpusBuilder};

    fn corpus(seed: u64, per_author: usize) -> (Vec<SurprisalSequence>, Vec<String>) {
        let builder = CorpusBuilder::new(vec![AuthorProfile::machine_like(), AuthorProfile::human_like()]);
        let docs = builder.generate(per_author, seed, "d");
        (docs, builder.label_set())
    }

    #[test]
    fn fit_and_evaluate_synthetic_authors() {
        let (train, labels) = corpus(1, 100);
        let (test, _) = corpus(2, 50);
        let fit = fit(&train, &labels, &FeatureConfig::default(), &TrainConfig::default()).unwrap();
        assert_eq!(fit.model.feature_dim, 44);
        assert_eq!(fit.model.span_mode, SpanMode::MinMax);
        let eval = evaluate(&fit.model, &test, &labels, 0, false).unwrap();
        assert!(eval.report.average_f1 >= 0.95, "{:?}", eval.report);
        for p in &eval.predictions {
            assert!((p.proba.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_between_model_and_rows() {
        let (train, labels) = corpus(3, 30);
        let fit = fit(&train, &labels, &FeatureConfig::default(), &TrainConfig::default()).unwrap();
        let short = features::featurize_corpus(&train, &FeatureConfig::default().with_span_length(10));
        let err = evaluate_matrix(&fit.model, short, &labels).unwrap_err();
        assert_eq!(err.to_string(), "dimension mismatch: expected 44 features, got 24");
    }

    #[test]
    fn empty_inputs() {
        let (train, labels) = corpus(4, 10);
        assert!(matches!(
            fit(&[], &labels, &FeatureConfig::default(), &TrainConfig::default()),
            Err(Error::NoDocuments)
        ));
        let fit = fit(&train, &labels, &FeatureConfig::default(), &TrainConfig::default()).unwrap();
        assert!(matches!(
            evaluate(&fit.model, &[], &labels, 0, false),
            Err(Error::NoDocuments)
        ));
    }
}
