//! UID scores and the fixed-length feature vector.
//!
//! For a document with token surprisals `u_1..u_n` (nats):
//!
//! * mean surprisal: `(1/n) Σ u_t`
//! * UID variance (global): `(1/n) Σ (u_t - mean)²`, population normalization
//! * UID difference (local): `(1/(n-1)) Σ_{t≥2} |u_t - u_{t-1}|`
//! * UID difference²: `(1/(n-1)) Σ_{t≥2} (u_t - u_{t-1})²`
//!
//! On top of those, a window of `N` consecutive tokens slides over the
//! document with stride 1. The surprisals of the highest-variance and the
//! lowest-variance windows are appended, giving
//! `[mean, variance, diff, diff², max_span.., min_span..]` of length `4 + 2N`
//! (44 for the default `N = 20`).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::surprisal_io::SurprisalSequence;
use crate::{fsutil, Error, Result};

pub const DEFAULT_SPAN_LENGTH: usize = 20;
/// Number of document-level scores at the head of every feature vector.
pub const GLOBAL_FEATURES: usize = 4;

pub fn surprisal_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Population variance. Values are shifted by the first element before the
/// two-pass sum, so a constant sequence gives exactly zero.
pub fn uid_variance(values: &[f64]) -> Result<f64> {
    let first = *values.first().ok_or(Error::TooShort { len: 0, min: 1 })?;
    Ok(shifted_variance(values, first))
}

fn shifted_variance(values: &[f64], shift: f64) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / n;
    values.iter().map(|v| (v - shift - mean).powi(2)).sum::<f64>() / n
}

fn consecutive_diffs(values: &[f64]) -> Result<impl Iterator<Item = f64> + '_> {
    if values.len() < 2 {
        return Err(Error::TooShort {
            len: values.len(),
            min: 2,
        });
    }
    Ok(values.windows(2).map(|w| w[1] - w[0]))
}

pub fn uid_diff(values: &[f64]) -> Result<f64> {
    let total: f64 = consecutive_diffs(values)?.map(f64::abs).sum();
    Ok(total / (values.len() - 1) as f64)
}

pub fn uid_diff_sq(values: &[f64]) -> Result<f64> {
    let total: f64 = consecutive_diffs(values)?.map(|d| d * d).sum();
    Ok(total / (values.len() - 1) as f64)
}

/// Variance of every window of `span_length` consecutive values, indexed by
/// window offset. Empty when the sequence is shorter than the window.
///
/// Running sums are kept over values shifted by the first element and are
/// recomputed from scratch periodically to bound drift.
pub fn window_variances(values: &[f64], span_length: usize) -> Vec<f64> {
    if span_length == 0 || values.len() < span_length {
        return Vec::new();
    }
    const RESYNC_EVERY: usize = 256;
    let shift = values[0];
    let n = span_length as f64;
    let centered = |v: f64| v - shift;
    let window_count = values.len() - span_length + 1;
    let mut out = Vec::with_capacity(window_count);
    let (mut s1, mut s2) = (0.0, 0.0);
    for offset in 0..window_count {
        if offset % RESYNC_EVERY == 0 {
            s1 = 0.0;
            s2 = 0.0;
            for &v in &values[offset..offset + span_length] {
                let c = centered(v);
                s1 += c;
                s2 += c * c;
            }
        } else {
            let gone = centered(values[offset - 1]);
            let came = centered(values[offset + span_length - 1]);
            s1 += came - gone;
            s2 += came * came - gone * gone;
        }
        let mean = s1 / n;
        out.push((s2 / n - mean * mean).max(0.0));
    }
    out
}

/// Highest- and lowest-variance windows of a document.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeSpans {
    pub max_span: Vec<f64>,
    pub min_span: Vec<f64>,
    pub max_offset: usize,
    pub min_offset: usize,
    /// Set when the document was shorter than the window and both spans
    /// were padded with the document mean.
    pub padded: bool,
}

fn padded_span(values: &[f64], span_length: usize) -> Result<Vec<f64>> {
    let mean = surprisal_mean(values)?;
    let mut span = values.to_vec();
    span.resize(span_length, mean);
    Ok(span)
}

/// Finds the max- and min-variance windows of length `span_length`.
///
/// Windows whose variances agree to within `1e-12` of the sequence's squared
/// range count as ties and resolve to the smallest offset. Documents shorter
/// than the window yield the whole document, right-padded with its mean, at
/// offset 0.
pub fn extreme_spans(values: &[f64], span_length: usize) -> Result<ExtremeSpans> {
    if values.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    check_span_length(span_length)?;
    if values.len() < span_length {
        let span = padded_span(values, span_length)?;
        return Ok(ExtremeSpans {
            max_span: span.clone(),
            min_span: span,
            max_offset: 0,
            min_offset: 0,
            padded: true,
        });
    }

    let variances = window_variances(values, span_length);
    let scale = values.iter().map(|v| (v - values[0]).powi(2)).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let (mut max_offset, mut min_offset) = (0, 0);
    for (offset, &v) in variances.iter().enumerate().skip(1) {
        if v > variances[max_offset] + tol {
            max_offset = offset;
        }
        if v < variances[min_offset] - tol {
            min_offset = offset;
        }
    }
    Ok(ExtremeSpans {
        max_span: values[max_offset..max_offset + span_length].to_vec(),
        min_span: values[min_offset..min_offset + span_length].to_vec(),
        max_offset,
        min_offset,
        padded: false,
    })
}

fn check_span_length(span_length: usize) -> Result<()> {
    if span_length < 2 {
        return Err(Error::InvalidConfig(format!(
            "span length must be at least 2, got {span_length}"
        )));
    }
    Ok(())
}

/// Which spans accompany the four global scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanMode {
    /// Highest- and lowest-variance windows.
    #[default]
    MinMax,
    /// Two windows at seeded uniformly random offsets (ablation baseline).
    Random,
    /// Global scores only.
    None,
}

impl SpanMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SpanMode::MinMax => "minmax",
            SpanMode::Random => "random",
            SpanMode::None => "none",
        }
    }
}

impl fmt::Display for SpanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(SpanMode::MinMax),
            "random" => Ok(SpanMode::Random),
            "none" => Ok(SpanMode::None),
            other => Err(Error::InvalidConfig(format!("unknown span mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub span_length: usize,
    pub span_mode: SpanMode,
    /// Seeds the offsets drawn in [`SpanMode::Random`].
    pub seed: u64,
    /// Reject documents shorter than the span instead of padding them.
    pub strict_short_docs: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            span_length: DEFAULT_SPAN_LENGTH,
            span_mode: SpanMode::MinMax,
            seed: 0,
            strict_short_docs: false,
        }
    }
}

impl FeatureConfig {
    pub fn with_span_mode(mut self, mode: SpanMode) -> Self {
        self.span_mode = mode;
        self
    }

    pub fn with_span_length(mut self, span_length: usize) -> Self {
        self.span_length = span_length;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn include_spans(&self) -> bool {
        self.span_mode != SpanMode::None
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.span_mode, self.span_length)
    }

    pub fn validate(&self) -> Result<()> {
        check_span_length(self.span_length)
    }
}

pub fn feature_dim(mode: SpanMode, span_length: usize) -> usize {
    match mode {
        SpanMode::None => GLOBAL_FEATURES,
        _ => GLOBAL_FEATURES + 2 * span_length,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UidFeatures {
    pub mean_surprisal: f64,
    pub uid_variance: f64,
    pub uid_diff: f64,
    pub uid_diff_sq: f64,
    pub max_span: Vec<f64>,
    pub min_span: Vec<f64>,
    pub max_span_offset: usize,
    pub min_span_offset: usize,
    pub span_length: usize,
    pub span_mode: SpanMode,
    pub padded: bool,
}

impl UidFeatures {
    /// `[mean, variance, diff, diff², max_span.., min_span..]`; spans are
    /// left out for [`SpanMode::None`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(feature_dim(self.span_mode, self.span_length));
        out.extend([self.mean_surprisal, self.uid_variance, self.uid_diff, self.uid_diff_sq]);
        if self.span_mode != SpanMode::None {
            out.extend_from_slice(&self.max_span);
            out.extend_from_slice(&self.min_span);
        }
        out
    }
}

/// FNV-1a, so per-document seeds do not depend on the std hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn random_spans(doc_id: &str, values: &[f64], cfg: &FeatureConfig) -> ExtremeSpans {
    let n = cfg.span_length;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ fnv1a(doc_id.as_bytes()));
    let last = (values.len() - n) as u64;
    let max_offset = rng.random_range(0..=last) as usize;
    let min_offset = rng.random_range(0..=last) as usize;
    ExtremeSpans {
        max_span: values[max_offset..max_offset + n].to_vec(),
        min_span: values[min_offset..min_offset + n].to_vec(),
        max_offset,
        min_offset,
        padded: false,
    }
}

/// Computes the feature set of one document. Pure: the same document and
/// config always give bit-identical output.
pub fn featurize(seq: &SurprisalSequence, cfg: &FeatureConfig) -> Result<UidFeatures> {
    cfg.validate()?;
    let values = seq.surprisals();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("surprisals"));
    }
    let uid_diff = uid_diff(&values)?;
    let uid_diff_sq = uid_diff_sq(&values)?;
    let mean_surprisal = surprisal_mean(&values)?;
    let uid_variance = uid_variance(&values)?;

    let n = cfg.span_length;
    if cfg.strict_short_docs && cfg.include_spans() && values.len() < n {
        return Err(Error::TooShort {
            len: values.len(),
            min: n,
        });
    }
    let spans = match cfg.span_mode {
        SpanMode::MinMax => extreme_spans(&values, n)?,
        SpanMode::Random if values.len() < n => extreme_spans(&values, n)?,
        SpanMode::Random => random_spans(&seq.doc_id, &values, cfg),
        SpanMode::None => ExtremeSpans {
            max_span: vec![0.0; n],
            min_span: vec![0.0; n],
            max_offset: 0,
            min_offset: 0,
            padded: false,
        },
    };
    Ok(UidFeatures {
        mean_surprisal,
        uid_variance,
        uid_diff,
        uid_diff_sq,
        max_span: spans.max_span,
        min_span: spans.min_span,
        max_span_offset: spans.max_offset,
        min_span_offset: spans.min_offset,
        span_length: n,
        span_mode: cfg.span_mode,
        padded: spans.padded,
    })
}

/// One line of a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub doc_id: String,
    pub label: Option<String>,
    pub features: Vec<f64>,
    pub padded: bool,
    pub max_offset: usize,
    pub min_offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedDoc {
    /// Position in the input corpus.
    pub index: usize,
    pub doc_id: String,
    pub reason: String,
}

/// Feature rows aligned to corpus order, minus the skipped documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureRow>,
    pub skipped: Vec<SkippedDoc>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Option<String>> {
        self.rows.iter().map(|r| r.label.clone()).collect()
    }

    /// Width shared by every row, `None` for an empty matrix.
    pub fn dim(&self) -> Option<usize> {
        self.rows.first().map(|r| r.features.len())
    }
}

/// Featurizes every document. Documents that fail a precondition are skipped
/// and listed; that is never an error.
pub fn featurize_corpus(corpus: &[SurprisalSequence], cfg: &FeatureConfig) -> FeatureMatrix {
    let mut matrix = FeatureMatrix::default();
    for (index, doc) in corpus.iter().enumerate() {
        match featurize(doc, cfg) {
            Ok(f) => matrix.rows.push(FeatureRow {
                doc_id: doc.doc_id.clone(),
                label: doc.label.clone(),
                features: f.flatten(),
                padded: f.padded,
                max_offset: f.max_span_offset,
                min_offset: f.min_span_offset,
            }),
            Err(e) => matrix.skipped.push(SkippedDoc {
                index,
                doc_id: doc.doc_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    matrix
}

pub fn feature_rows_to_jsonl(rows: &[FeatureRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_feature_file(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    fsutil::write_atomic(path, feature_rows_to_jsonl(rows)?.as_bytes())
}

/// Parses a feature file, requiring one consistent, finite width.
pub fn parse_feature_str(contents: &str, origin: &Path) -> Result<Vec<FeatureRow>> {
    let mut rows: Vec<FeatureRow> = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: FeatureRow = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            path: origin.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = rows.first() {
            if first.features.len() != row.features.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.features.len(),
                    actual: row.features.len(),
                });
            }
        }
        if row.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature file"));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureRow>> {
    parse_feature_str(&fsutil::read_to_string(path)?, path)
}

/// True when the first non-blank line of a JSON Lines file is a feature row
/// rather than a surprisal document.
pub fn looks_like_feature_file(contents: &str) -> bool {
    contents
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("features").is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: &[f64]) -> SurprisalSequence {
        SurprisalSequence::from_surprisals("doc", Some("a".into()), values)
    }

    #[test]
    fn mean_examples() {
        assert_eq!(surprisal_mean(&[2.0, 2.0, 2.0]).unwrap(), 2.0);
        assert_eq!(surprisal_mean(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(surprisal_mean(&[0.0, 0.0, 6.0]).unwrap(), 2.0);
        assert!(surprisal_mean(&[]).is_err());
    }

    #[test]
    fn variance_examples() {
        assert_eq!(uid_variance(&[5.0; 4]).unwrap(), 0.0);
        assert_eq!(uid_variance(&[1.0, 3.0]).unwrap(), 1.0);
        assert_eq!(uid_variance(&[0.0, 0.0, 6.0]).unwrap(), 8.0);
        assert_eq!(uid_variance(&[0.1; 7]).unwrap(), 0.0);
        assert!(uid_variance(&[]).is_err());
    }

    #[test]
    fn diff_examples() {
        assert_eq!(uid_diff(&[5.0; 3]).unwrap(), 0.0);
        assert_eq!(uid_diff(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(uid_diff(&[1.0, 4.0, 2.0]).unwrap(), 2.5);
        assert_eq!(uid_diff_sq(&[5.0; 3]).unwrap(), 0.0);
        assert_eq!(uid_diff_sq(&[1.0, 3.0]).unwrap(), 4.0);
        assert_eq!(uid_diff_sq(&[1.0, 4.0, 2.0]).unwrap(), 6.5);
        assert!(matches!(uid_diff(&[1.0]), Err(Error::TooShort { len: 1, min: 2 })));
        assert!(uid_diff_sq(&[]).is_err());
    }

    #[test]
    fn spike_spans() {
        let s = extreme_spans(&[0., 0., 0., 9., 0., 0., 0., 0.], 4).unwrap();
        assert_eq!(s.max_span, [0., 0., 0., 9.]);
        assert_eq!(s.max_offset, 0);
        assert_eq!(s.min_span, [0.; 4]);
        assert_eq!(s.min_offset, 4);
        assert!(!s.padded);
        assert_eq!(uid_variance(&s.max_span).unwrap(), 15.1875);
    }

    #[test]
    fn constant_spans_tie_to_first_offset() {
        let s = extreme_spans(&[5.0; 5], 3).unwrap();
        assert_eq!(s.max_span, [5.0; 3]);
        assert_eq!(s.min_span, [5.0; 3]);
        assert_eq!((s.max_offset, s.min_offset), (0, 0));
        assert!(window_variances(&[0.3; 40], 20).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_documents_are_padded_with_mean() {
        let s = extreme_spans(&[1.0, 2.0], 4).unwrap();
        assert_eq!(s.max_span, [1.0, 2.0, 1.5, 1.5]);
        assert_eq!(s.min_span, [1.0, 2.0, 1.5, 1.5]);
        assert_eq!((s.max_offset, s.min_offset), (0, 0));
        assert!(s.padded);
    }

    #[test]
    fn span_errors() {
        assert!(extreme_spans(&[], 4).is_err());
        assert!(matches!(extreme_spans(&[1.0, 2.0], 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn flatten_lengths() {
        let values: Vec<f64> = (0..50).map(|i| (i % 7) as f64 * 0.5).collect();
        let s = seq(&values);
        let cfg = FeatureConfig::default();
        assert_eq!(featurize(&s, &cfg).unwrap().flatten().len(), 44);
        let none = cfg.with_span_mode(SpanMode::None);
        let f = featurize(&s, &none).unwrap();
        assert_eq!(f.flatten().len(), 4);
        assert_eq!(f.max_span, vec![0.0; 20]);
        let random = cfg.with_span_mode(SpanMode::Random).with_span_length(10);
        assert_eq!(featurize(&s, &random).unwrap().flatten().len(), 24);
    }

    #[test]
    fn constant_document_vector() {
        let f = featurize(&seq(&[5.0; 30]), &FeatureConfig::default()).unwrap();
        let mut expected = vec![5.0, 0.0, 0.0, 0.0];
        expected.extend([5.0; 40]);
        assert_eq!(f.flatten(), expected);
    }

    #[test]
    fn strict_mode_rejects_short_documents() {
        let cfg = FeatureConfig {
            strict_short_docs: true,
            ..FeatureConfig::default()
        };
        assert!(matches!(
            featurize(&seq(&[1.0, 2.0, 3.0]), &cfg),
            Err(Error::TooShort { len: 3, min: 20 })
        ));
        let padded = featurize(&seq(&[1.0, 2.0, 3.0]), &FeatureConfig::default()).unwrap();
        assert!(padded.padded);
    }

    #[test]
    fn random_spans_are_seeded() {
        let values: Vec<f64> = (0..200).map(|i| ((i * 37) % 11) as f64).collect();
        let s = seq(&values);
        let cfg = FeatureConfig::default().with_span_mode(SpanMode::Random).with_seed(3);
        let a = featurize(&s, &cfg).unwrap();
        assert_eq!(a, featurize(&s, &cfg).unwrap());
        let offsets: Vec<_> = (0..20)
            .map(|seed| featurize(&s, &cfg.with_seed(seed)).unwrap().max_span_offset)
            .collect();
        assert!(offsets.iter().any(|&o| o != offsets[0]));
        assert!(offsets.iter().all(|&o| o <= 180));
    }

    #[test]
    fn corpus_featurization_skips_and_aligns() {
        let docs = vec![
            SurprisalSequence::from_surprisals("a", None, &[1.0, 2.0, 3.0]),
            SurprisalSequence::from_surprisals("b", None, &[1.0]),
            SurprisalSequence::from_surprisals("c", None, &[4.0, 2.0]),
        ];
        let m = featurize_corpus(&docs, &FeatureConfig::default());
        let ids: Vec<_> = m.rows.iter().map(|r| r.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert_eq!(m.skipped.len(), 1);
        assert_eq!(m.skipped[0].index, 1);
        assert_eq!(m.dim(), Some(44));

        let empty = featurize_corpus(&[], &FeatureConfig::default());
        assert_eq!(empty.n_rows(), 0);
        assert!(empty.skipped.is_empty());
    }

    #[test]
    fn feature_file_round_trip_and_sniffing() {
        let docs = vec![SurprisalSequence::from_surprisals(
            "a",
            Some("x".into()),
            &[0.1, 2.7, 3.3],
        )];
        let m = featurize_corpus(&docs, &FeatureConfig::default());
        let text = feature_rows_to_jsonl(&m.rows).unwrap();
        assert!(looks_like_feature_file(&text));
        assert!(!looks_like_feature_file(&crate::surprisal_io::to_jsonl(&docs).unwrap()));
        assert_eq!(parse_feature_str(&text, Path::new("f")).unwrap(), m.rows);
    }

    #[test]
    fn span_mode_parsing() {
        for mode in [SpanMode::MinMax, SpanMode::Random, SpanMode::None] {
            assert_eq!(mode.as_str().parse::<SpanMode>().unwrap(), mode);
        }
        assert!("max".parse::<SpanMode>().is_err());
    }
}
