//! Author detection from the distribution of token surprisals.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`surprisal_io`] reads per-token surprisal documents (JSON Lines) and
//!    dataset manifests.
//! 2. [`features`] turns each document into a fixed-length vector of
//!    Uniform Information Density (UID) scores plus the surprisals of its
//!    most and least uniform spans.
//! 3. [`classifier`] fits a multinomial logistic regression on those vectors.
//! 4. [`eval`] scores predictions (per-class and average F1) and summarizes
//!    per-author UID distributions.
//!
//! [`synth`] generates synthetic surprisal corpora with controlled dispersion,
//! used by the test suites and the browser demo.

pub mod classifier;
mod error;
pub mod eval;
pub mod features;
pub mod fsutil;
pub mod pipeline;
pub mod surprisal_io;
pub mod synth;

pub use classifier::{LogRegModel, TrainConfig, TrainSummary};
pub use error::{Error, Result};
pub use eval::{DistributionSummary, EvalReport};
pub use features::{FeatureConfig, SpanMode, UidFeatures};
pub use surprisal_io::{DatasetManifest, SurprisalSequence, TokenSurprisal};
