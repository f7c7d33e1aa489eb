//! Surprisal interchange format and dataset manifests.
//!
//! A surprisal file is UTF-8 JSON Lines, one document per line:
//!
//! ```text
//! {"doc_id": "d1", "label": "human", "tokens": [{"t": "Hello", "s": 5.2}, {"t": " world", "s": 1.1}]}
//! ```
//!
//! `s` is the token surprisal in nats (natural log). `label` may be `null`
//! or absent for prediction-only corpora. Blank lines are ignored.
//!
//! A manifest is a single JSON document naming the label set and the
//! surprisal files of each split; paths are relative to the manifest file.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::fsutil;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSurprisal {
    #[serde(rename = "t")]
    pub token: String,
    /// Surprisal in nats.
    #[serde(rename = "s")]
    pub surprisal: f64,
}

impl TokenSurprisal {
    pub fn new(token: impl Into<String>, surprisal: f64) -> Self {
        Self {
            token: token.into(),
            surprisal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalSequence {
    pub doc_id: String,
    pub label: Option<String>,
    pub tokens: Vec<TokenSurprisal>,
}

impl SurprisalSequence {
    pub fn new(doc_id: impl Into<String>, label: Option<String>, tokens: Vec<TokenSurprisal>) -> Self {
        Self {
            doc_id: doc_id.into(),
            label,
            tokens,
        }
    }

    /// Builds a sequence from bare surprisal values, naming tokens by index.
    pub fn from_surprisals(doc_id: impl Into<String>, label: Option<String>, values: &[f64]) -> Self {
        let tokens = values
            .iter()
            .enumerate()
            .map(|(i, &s)| TokenSurprisal::new(format!("<{i}>"), s))
            .collect();
        Self::new(doc_id, label, tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surprisals(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.surprisal).collect()
    }

    /// Checks the per-document invariants, returning the first violation.
    pub fn validate(&self) -> std::result::Result<(), RejectReason> {
        if self.tokens.is_empty() {
            return Err(RejectReason::EmptyTokens);
        }
        for (index, tok) in self.tokens.iter().enumerate() {
            if tok.token.is_empty() {
                return Err(RejectReason::EmptyToken { index });
            }
            if !tok.surprisal.is_finite() {
                return Err(RejectReason::NonFiniteSurprisal { index });
            }
            if tok.surprisal < 0.0 {
                return Err(RejectReason::NegativeSurprisal { index });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    EmptyTokens,
    EmptyToken { index: usize },
    NonFiniteSurprisal { index: usize },
    NegativeSurprisal { index: usize },
    DuplicateDocId,
}

/// A document dropped at ingest, with enough context to find it again.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    /// 1-based line number in the source file.
    pub line: usize,
    pub doc_id: String,
    pub reason: RejectReason,
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = &self.doc_id;
        match self.reason {
            RejectReason::EmptyTokens => write!(f, "empty token list in {id}"),
            RejectReason::EmptyToken { index } => write!(f, "empty token text in {id} at token {index}"),
            RejectReason::NonFiniteSurprisal { index } => {
                write!(f, "non-finite surprisal in {id} at token {index}")
            }
            RejectReason::NegativeSurprisal { index } => {
                write!(f, "negative surprisal in {id} at token {index}")
            }
            RejectReason::DuplicateDocId => write!(f, "duplicate doc_id {id}"),
        }?;
        write!(f, " (line {})", self.line)
    }
}

/// Result of parsing one surprisal file.
#[derive(Debug, Clone, Default)]
pub struct ParsedFile {
    pub documents: Vec<SurprisalSequence>,
    pub rejects: Vec<Reject>,
}

#[derive(Deserialize)]
struct RawToken {
    t: String,
    s: Option<f64>,
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: String,
    #[serde(default)]
    label: Option<String>,
    tokens: Vec<RawToken>,
}

/// Python's `json` module writes `NaN` / `Infinity` for non-finite floats.
/// Rewrites those bare literals to `null` so the document can be rejected by
/// name instead of failing the whole line.
fn null_out_nonfinite_literals(line: &str) -> Option<String> {
    let bytes = line.as_bytes();
    let mut out = String::with_capacity(line.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut changed = false;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if c == b'\\' {
                escaped = true;
            } else if c == b'"' {
                in_string = false;
            }
        } else if c == b'"' {
            in_string = true;
        } else {
            let rest = &line[i..];
            let hit = ["-Infinity", "Infinity", "NaN"]
                .iter()
                .find(|lit| rest.starts_with(**lit));
            if let Some(lit) = hit {
                out.push_str("null");
                i += lit.len();
                changed = true;
                continue;
            }
        }
        // Copy the whole UTF-8 scalar starting at i.
        let ch = line[i..].chars().next().unwrap_or('\0');
        out.push(ch);
        i += ch.len_utf8().max(1);
    }
    changed.then_some(out)
}

/// Parses the contents of a surprisal file. `origin` is only used in error
/// messages.
pub fn parse_surprisal_str(contents: &str, origin: &Path) -> Result<ParsedFile> {
    let mut parsed = ParsedFile::default();
    let mut seen = HashSet::new();
    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = match serde_json::from_str(line) {
            Ok(raw) => raw,
            Err(first) => null_out_nonfinite_literals(line)
                .and_then(|fixed| serde_json::from_str(&fixed).ok())
                .ok_or_else(|| Error::MalformedLine {
                    path: origin.to_path_buf(),
                    line: line_no,
                    message: first.to_string(),
                })?,
        };
        let doc = SurprisalSequence {
            doc_id: raw.doc_id,
            label: raw.label,
            tokens: raw
                .tokens
                .into_iter()
                .map(|t| TokenSurprisal::new(t.t, t.s.unwrap_or(f64::NAN)))
                .collect(),
        };
        let verdict = doc.validate().and_then(|()| {
            if seen.contains(&doc.doc_id) {
                Err(RejectReason::DuplicateDocId)
            } else {
                Ok(())
            }
        });
        match verdict {
            Ok(()) => {
                seen.insert(doc.doc_id.clone());
                parsed.documents.push(doc);
            }
            Err(reason) => parsed.rejects.push(Reject {
                line: line_no,
                doc_id: doc.doc_id,
                reason,
            }),
        }
    }
    Ok(parsed)
}

pub fn parse_surprisal_file(path: &Path) -> Result<ParsedFile> {
    let contents = fsutil::read_to_string(path)?;
    parse_surprisal_str(&contents, path)
}

/// Serializes documents to the interchange format, one line each.
pub fn to_jsonl(docs: &[SurprisalSequence]) -> Result<String> {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_surprisal_file(path: &Path, docs: &[SurprisalSequence]) -> Result<()> {
    fsutil::write_atomic(path, to_jsonl(docs)?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub label_set: Vec<String>,
    #[serde(deserialize_with = "unique_splits")]
    pub splits: BTreeMap<String, Vec<PathBuf>>,
}

fn unique_splits<'de, D>(deserializer: D) -> std::result::Result<BTreeMap<String, Vec<PathBuf>>, D::Error>
where
    D: Deserializer<'de>,
{
    struct SplitVisitor;

    impl<'de> Visitor<'de> for SplitVisitor {
        type Value = BTreeMap<String, Vec<PathBuf>>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map of split name to file list")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            let mut splits = BTreeMap::new();
            while let Some((name, files)) = map.next_entry::<String, Vec<PathBuf>>()? {
                if splits.insert(name.clone(), files).is_some() {
                    return Err(serde::de::Error::custom(format!("duplicate split `{name}`")));
                }
            }
            Ok(splits)
        }
    }

    deserializer.deserialize_map(SplitVisitor)
}

impl DatasetManifest {
    /// Reads a manifest and resolves every split path against the manifest's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let contents = fsutil::read_to_string(path)?;
        let invalid = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            message,
        };
        let mut manifest: DatasetManifest = serde_json::from_str(&contents).map_err(|e| invalid(e.to_string()))?;
        manifest.check().map_err(invalid)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for files in manifest.splits.values_mut() {
            for file in files.iter_mut() {
                if file.is_relative() {
                    *file = base.join(&*file);
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fsutil::write_atomic(path, text.as_bytes())
    }

    fn check(&self) -> std::result::Result<(), String> {
        let mut seen = HashSet::new();
        for label in &self.label_set {
            if label.is_empty() {
                return Err("empty label in label_set".into());
            }
            if !seen.insert(label) {
                return Err(format!("duplicate label `{label}` in label_set"));
            }
        }
        Ok(())
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.label_set.iter().any(|l| l == label)
    }
}

/// A labeled split: documents in file order, then line order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<SurprisalSequence>,
    pub rejects: Vec<(PathBuf, Reject)>,
}

/// Loads every file of `split`, requiring each document to carry a label from
/// the manifest's label set.
pub fn load_corpus(manifest: &DatasetManifest, split: &str) -> Result<Corpus> {
    let files = manifest
        .splits
        .get(split)
        .ok_or_else(|| Error::UnknownSplit(split.to_string()))?;
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for file in files {
        let parsed = parse_surprisal_file(file)?;
        for doc in parsed.documents {
            check_label(manifest, &doc.doc_id, doc.label.as_deref())?;
            if !seen.insert(doc.doc_id.clone()) {
                return Err(Error::DuplicateDocId(doc.doc_id));
            }
            corpus.documents.push(doc);
        }
        corpus
            .rejects
            .extend(parsed.rejects.into_iter().map(|r| (file.clone(), r)));
    }
    Ok(corpus)
}

pub(crate) fn check_label(manifest: &DatasetManifest, doc_id: &str, label: Option<&str>) -> Result<()> {
    match label {
        None => Err(Error::MissingLabel {
            doc_id: doc_id.to_string(),
        }),
        Some(l) if !manifest.has_label(l) => Err(Error::UnknownLabel {
            doc_id: doc_id.to_string(),
            label: l.to_string(),
        }),
        Some(_) => Ok(()),
    }
}
