//! Browser bindings: analyze a surprisal sequence, draw synthetic documents,
//! and run a small span ablation. Results cross the boundary as JSON strings.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use uidscope::classifier::TrainConfig;
use uidscope::features::{self, FeatureConfig, SpanMode};
use uidscope::pipeline;
use uidscope::synth::{AuthorProfile, CorpusBuilder};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Analysis {
    pub n_tokens: usize,
    pub mean_surprisal: f64,
    pub uid_variance: f64,
    pub uid_diff: f64,
    pub uid_diff_sq: f64,
    pub span_length: usize,
    pub window_variances: Vec<f64>,
    pub max_offset: usize,
    pub min_offset: usize,
    pub padded: bool,
}

pub fn analysis(surprisals: &[f64], span_length: usize) -> Result<Analysis, String> {
    if surprisals.len() < 2 {
        return Err(format!("need at least 2 surprisals, got {}", surprisals.len()));
    }
    if let Some(bad) = surprisals.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(format!("surprisals must be finite and non-negative, got {bad}"));
    }
    let e = |err: uidscope::Error| err.to_string();
    let spans = features::extreme_spans(surprisals, span_length).map_err(e)?;
    Ok(Analysis {
        n_tokens: surprisals.len(),
        mean_surprisal: features::surprisal_mean(surprisals).map_err(e)?,
        uid_variance: features::uid_variance(surprisals).map_err(e)?,
        uid_diff: features::uid_diff(surprisals).map_err(e)?,
        uid_diff_sq: features::uid_diff_sq(surprisals).map_err(e)?,
        span_length,
        window_variances: features::window_variances(surprisals, span_length),
        max_offset: spans.max_offset,
        min_offset: spans.min_offset,
        padded: spans.padded,
    })
}

fn profile(name: &str) -> Result<AuthorProfile, String> {
    let (smooth, bursty) = AuthorProfile::bursty_pair();
    match name {
        "machine" => Ok(AuthorProfile::machine_like()),
        "human" => Ok(AuthorProfile::human_like()),
        "smooth" => Ok(smooth),
        "bursty" => Ok(bursty),
        other => Err(format!(
            "unknown profile `{other}`; expected machine, human, smooth or bursty"
        )),
    }
}

pub fn sample(name: &str, seed: u64) -> Result<Vec<f64>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    profile(name)?.sample_surprisals(&mut rng).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct AblationRow {
    pub span_mode: SpanMode,
    pub feature_dim: usize,
    pub average_f1: f64,
    pub accuracy: f64,
}

/// Trains one classifier per span mode on the smooth/bursty corpus and scores
/// each on a held-out set.
pub fn ablation(seed: u64, per_author: usize) -> Result<Vec<AblationRow>, String> {
    if per_author < 2 {
        return Err("need at least 2 documents per author".into());
    }
    let (smooth, bursty) = AuthorProfile::bursty_pair();
    let builder = CorpusBuilder::new(vec![smooth, bursty]);
    let e = |err: uidscope::Error| err.to_string();
    let train = builder.try_generate(per_author, seed, "train").map_err(e)?;
    let test = builder
        .try_generate(per_author, seed.wrapping_add(1), "test")
        .map_err(e)?;
    let labels = builder.label_set();
    [SpanMode::MinMax, SpanMode::Random, SpanMode::None]
        .into_iter()
        .map(|mode| {
            let cfg = FeatureConfig::default().with_span_mode(mode).with_seed(seed);
            let train_cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let fit = pipeline::fit(&train, &labels, &cfg, &train_cfg).map_err(e)?;
            let eval = pipeline::evaluate(&fit.model, &test, &labels, seed, false).map_err(e)?;
            Ok(AblationRow {
                span_mode: mode,
                feature_dim: cfg.feature_dim(),
                average_f1: eval.report.average_f1,
                accuracy: eval.report.accuracy,
            })
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsValue> {
    serde_json::to_string(value).map_err(|e| JsValue::from_str(&e.to_string()))
}

/// UID scores, per-window variances and extreme span offsets, as JSON.
#[wasm_bindgen(js_name = analyze)]
pub fn analyze_js(surprisals: &[f64], span_length: usize) -> Result<String, JsValue> {
    to_json(&analysis(surprisals, span_length).map_err(|e| JsValue::from_str(&e))?)
}

/// Surprisals for one synthetic document of the named profile.
#[wasm_bindgen(js_name = sampleDocument)]
pub fn sample_js(profile: &str, seed: u32) -> Result<Vec<f64>, JsValue> {
    sample(profile, seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = spanAblation)]
pub fn ablation_js(seed: u32, per_author: usize) -> Result<String, JsValue> {
    to_json(&ablation(seed.into(), per_author).map_err(|e| JsValue::from_str(&e))?)
}
