//! Evaluation: per-class F1, multi-seed aggregation, and per-author UID
//! distributions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::features::{self, FeatureConfig};
use crate::pipeline;
use crate::surprisal_io::SurprisalSequence;
use crate::{fsutil, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Row and column order of `confusion`.
    pub classes: Vec<String>,
    pub per_class: BTreeMap<String, ClassMetrics>,
    /// Mean F1 over classes that occur in the gold labels or the predictions.
    pub macro_f1: f64,
    /// Unweighted mean F1 over classes with nonzero gold support.
    pub average_f1: f64,
    /// Support-weighted mean F1.
    pub weighted_f1: f64,
    pub accuracy: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_docs: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// One-vs-rest precision, recall and F1 for every class in `label_set`.
///
/// F1 is `2pr / (p + r)`, or 0 when `p + r = 0`. Classes with no gold support
/// still get a row but are left out of `average_f1`.
pub fn f1_report<P: AsRef<str>, G: AsRef<str>>(
    predictions: &[P],
    gold: &[G],
    label_set: &[String],
) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    let index = |label: &str| {
        label_set
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownClass(label.to_string()))
    };
    let c = label_set.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (p, g) in predictions.iter().zip(gold) {
        confusion[index(g.as_ref())?][index(p.as_ref())?] += 1;
    }
    let mut per_class = BTreeMap::new();
    let (mut macro_f1s, mut supported_f1s) = (Vec::new(), Vec::new());
    let mut weighted = 0.0;
    let mut correct = 0;
    for (k, name) in label_set.iter().enumerate() {
        let tp = confusion[k][k];
        let support: usize = confusion[k].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[k]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support > 0 || predicted > 0 {
            macro_f1s.push(f1);
        }
        if support > 0 {
            supported_f1s.push(f1);
        }
        weighted += f1 * support as f64;
        correct += tp;
        per_class.insert(
            name.clone(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let n = gold.len();
    Ok(EvalReport {
        classes: label_set.to_vec(),
        per_class,
        macro_f1: mean(&macro_f1s),
        average_f1: mean(&supported_f1s),
        weighted_f1: if n == 0 { 0.0 } else { weighted / n as f64 },
        accuracy: ratio(correct, n),
        confusion,
        n_docs: n,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// `class,precision,recall,f1,support` rows in class order, followed by
    /// `accuracy`, `macro_f1`, `average_f1` and `weighted_f1` summary rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "precision", "recall", "f1", "support"])?;
        for name in &self.classes {
            let m = &self.per_class[name];
            w.write_record([
                name.clone(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.support.to_string(),
            ])?;
        }
        let n = self.n_docs.to_string();
        for (name, value) in [
            ("accuracy", self.accuracy),
            ("macro_f1", self.macro_f1),
            ("average_f1", self.average_f1),
            ("weighted_f1", self.weighted_f1),
        ] {
            w.write_record([name, "", "", &value.to_string(), &n])?;
        }
        csv_into_string(w)
    }
}

fn csv_into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Csv(csv::Error::from(e.into_error())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes the report as CSV when `path` ends in `.csv`, JSON otherwise.
pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let text = if is_csv { report.to_csv()? } else { report.to_json()? };
    fsutil::write_atomic(path, text.as_bytes())
}

/// Reads a report written as JSON by [`write_report`].
pub fn read_report(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_str(&fsutil::read_to_string(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedScore {
    pub testbed: String,
    pub average_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub n_docs: usize,
}

/// Scores of several separately evaluated testbeds and their unweighted mean.
/// `mean.average_f1` averages the per-testbed class averages, so every testbed
/// counts once regardless of size or class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedSummary {
    pub testbeds: Vec<TestbedScore>,
    pub mean: TestbedScore,
}

pub fn average_over_testbeds(reports: &[(String, EvalReport)]) -> Result<TestbedSummary> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("at least one report is required".into()));
    }
    let testbeds: Vec<TestbedScore> = reports
        .iter()
        .map(|(name, r)| TestbedScore {
            testbed: name.clone(),
            average_f1: r.average_f1,
            weighted_f1: r.weighted_f1,
            accuracy: r.accuracy,
            n_docs: r.n_docs,
        })
        .collect();
    let col = |f: fn(&TestbedScore) -> f64| mean(&testbeds.iter().map(f).collect::<Vec<_>>());
    let mean = TestbedScore {
        testbed: "mean".into(),
        average_f1: col(|t| t.average_f1),
        weighted_f1: col(|t| t.weighted_f1),
        accuracy: col(|t| t.accuracy),
        n_docs: testbeds.iter().map(|t| t.n_docs).sum(),
    };
    Ok(TestbedSummary { testbeds, mean })
}

impl TestbedSummary {
    /// `testbed,average_f1,weighted_f1,accuracy,n_docs`, one row per testbed
    /// and a closing `mean` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["testbed", "average_f1", "weighted_f1", "accuracy", "n_docs"])?;
        for t in self.testbeds.iter().chain(std::iter::once(&self.mean)) {
            w.write_record([
                t.testbed.clone(),
                t.average_f1.to_string(),
                t.weighted_f1.to_string(),
                t.accuracy.to_string(),
                t.n_docs.to_string(),
            ])?;
        }
        csv_into_string(w)
    }
}

/// A train/test experiment repeated per seed.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub train: &'a [SurprisalSequence],
    pub test: &'a [SurprisalSequence],
    pub label_set: &'a [String],
    pub features: FeatureConfig,
    pub training: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let var = mean(&values.iter().map(|v| (v - m).powi(2)).collect::<Vec<_>>());
        Self {
            mean: m,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub seeds: Vec<u64>,
    pub runs: Vec<EvalReport>,
    pub average_f1: MeanStd,
    pub macro_f1: MeanStd,
    pub weighted_f1: MeanStd,
    pub accuracy: MeanStd,
    /// Per-class F1 across seeds.
    pub per_class_f1: BTreeMap<String, MeanStd>,
}

/// Featurizes, trains and scores once per seed, then aggregates. The seed
/// drives random span sampling and is recorded in the training config; with
/// `minmax` or `none` spans every seed gives the same result.
pub fn seed_averaged_eval(experiment: &Experiment<'_>, seeds: &[u64]) -> Result<SeedAggregate> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run = || -> Result<EvalReport> {
            let feature_cfg = experiment.features.with_seed(seed);
            let train_cfg = TrainConfig {
                seed,
                ..experiment.training
            };
            let fit = pipeline::fit(experiment.train, experiment.label_set, &feature_cfg, &train_cfg)?;
            let eval = pipeline::evaluate(
                &fit.model,
                experiment.test,
                experiment.label_set,
                seed,
                feature_cfg.strict_short_docs,
            )?;
            Ok(eval.report)
        };
        runs.push(run().map_err(|e| Error::Seed {
            seed,
            source: Box::new(e),
        })?);
    }
    let collect = |f: &dyn Fn(&EvalReport) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
    let per_class_f1 = experiment
        .label_set
        .iter()
        .map(|c| (c.clone(), collect(&|r: &EvalReport| r.per_class[c].f1)))
        .collect();
    Ok(SeedAggregate {
        seeds: seeds.to_vec(),
        average_f1: collect(&|r| r.average_f1),
        macro_f1: collect(&|r| r.macro_f1),
        weighted_f1: collect(&|r| r.weighted_f1),
        accuracy: collect(&|r| r.accuracy),
        per_class_f1,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorSummary {
    pub label: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub n_docs: usize,
}

/// Per-author statistics of document-level UID variance scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub authors: Vec<AuthorSummary>,
    pub n_docs: usize,
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n - 1)·q`). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(label: &str, scores: &[f64]) -> Result<AuthorSummary> {
    if scores.is_empty() {
        return Err(Error::EmptyGroup(label.to_string()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let stats = MeanStd::of(scores);
    Ok(AuthorSummary {
        label: label.to_string(),
        mean: stats.mean,
        std: stats.std,
        min: sorted[0],
        q25: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q75: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        n_docs: scores.len(),
    })
}

/// Groups labeled documents by author, in label order.
pub fn group_by_label(docs: &[SurprisalSequence]) -> Result<BTreeMap<String, Vec<&SurprisalSequence>>> {
    let mut groups: BTreeMap<String, Vec<&SurprisalSequence>> = BTreeMap::new();
    for doc in docs {
        let label = doc.label.as_ref().ok_or_else(|| Error::MissingLabel {
            doc_id: doc.doc_id.clone(),
        })?;
        groups.entry(label.clone()).or_default().push(doc);
    }
    Ok(groups)
}

/// Summarizes the UID variance of every group. An empty group is an error.
pub fn uid_distribution_summary(groups: &BTreeMap<String, Vec<&SurprisalSequence>>) -> Result<DistributionSummary> {
    let mut authors = Vec::with_capacity(groups.len());
    for (label, docs) in groups {
        let scores = docs
            .iter()
            .map(|d| features::uid_variance(&d.surprisals()))
            .collect::<Result<Vec<_>>>()?;
        authors.push(summarize(label, &scores)?);
    }
    let n_docs = authors.iter().map(|a| a.n_docs).sum();
    Ok(DistributionSummary { authors, n_docs })
}

impl DistributionSummary {
    /// `label,mean,std,min,q25,median,q75,max,n_docs`, one row per author.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "mean", "std", "min", "q25", "median", "q75", "max", "n_docs"])?;
        for a in &self.authors {
            let mut record = vec![a.label.clone()];
            record.extend([a.mean, a.std, a.min, a.q25, a.median, a.q75, a.max].map(|v| v.to_string()));
            record.push(a.n_docs.to_string());
            w.write_record(&record)?;
        }
        csv_into_string(w)
    }
}
