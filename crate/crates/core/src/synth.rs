//! Synthetic surprisal corpora with controlled dispersion.
//!
//! Token surprisals are drawn from Gamma distributions parameterized by mean
//! and variance, so every value is finite and non-negative. A profile may add
//! a slow level drift, and one burst: a run of consecutive tokens drawn from a
//! different distribution at a random position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::surprisal_io::{SurprisalSequence, TokenSurprisal};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub mean: f64,
    pub variance: f64,
}

impl Dispersion {
    pub fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    fn gamma(&self) -> Result<Gamma<f64>> {
        if !(self.mean > 0.0 && self.variance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dispersion needs positive mean and variance, got {self:?}"
            )));
        }
        Gamma::new(self.mean * self.mean / self.variance, self.variance / self.mean)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub length: usize,
    pub dispersion: Dispersion,
}

/// Slow sinusoidal shift of the surprisal level, with a random phase per
/// document. Moves the global variance without roughening consecutive tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub amplitude: f64,
    /// Period in tokens.
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorProfile {
    pub name: String,
    pub base: Dispersion,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub burst: Option<Burst>,
    pub drift: Option<Drift>,
}

impl AuthorProfile {
    /// Even surprisal: mean 3 nats, variance 0.5.
    pub fn machine_like() -> Self {
        Self {
            name: "machine".into(),
            base: Dispersion::new(3.0, 0.5),
            min_tokens: 80,
            max_tokens: 300,
            burst: None,
            drift: None,
        }
    }

    /// Uneven surprisal: mean 3 nats, variance 4.
    pub fn human_like() -> Self {
        Self {
            name: "human".into(),
            base: Dispersion::new(3.0, 4.0),
            ..Self::machine_like()
        }
    }

    /// Two 300-token authors whose whole-document statistics agree in
    /// expectation (mean 3 nats, variance ≈ 1.45, similar consecutive
    /// differences). `smooth` gets its extra variance from a slow level drift
    /// over the whole document; `bursty` gets it from a single 20-token run at
    /// an elevated level (mean 5.5). Only span features can tell them apart.
    pub fn bursty_pair() -> (Self, Self) {
        let smooth = Self {
            name: "smooth".into(),
            base: Dispersion::new(3.0, 1.0),
            min_tokens: 300,
            max_tokens: 300,
            burst: None,
            drift: Some(Drift {
                amplitude: 0.946,
                period: 150.0,
            }),
        };
        let bursty = Self {
            name: "bursty".into(),
            // (300·3 − 20·5.5) / 280 keeps the document mean at 3.
            base: Dispersion::new(2.821, 1.0),
            burst: Some(Burst {
                length: 20,
                dispersion: Dispersion::new(5.5, 1.0),
            }),
            drift: None,
            ..smooth.clone()
        };
        (smooth, bursty)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Draws one document's surprisals.
    pub fn sample_surprisals<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::InvalidConfig(format!(
                "bad token range {}..={}",
                self.min_tokens, self.max_tokens
            )));
        }
        let len = rng.random_range(self.min_tokens as u64..=self.max_tokens as u64) as usize;
        let base = self.base.gamma()?;
        let mut values: Vec<f64> = (0..len).map(|_| base.sample(rng)).collect();
        if let Some(drift) = &self.drift {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            for (t, v) in values.iter_mut().enumerate() {
                let shift = drift.amplitude * (std::f64::consts::TAU * t as f64 / drift.period + phase).sin();
                *v = (*v + shift).max(0.0);
            }
        }
        if let Some(burst) = &self.burst {
            let run = burst.length.min(len);
            let start = rng.random_range(0..=(len - run) as u64) as usize;
            let dist = burst.dispersion.gamma()?;
            for v in &mut values[start..start + run] {
                *v = dist.sample(rng);
            }
        }
        Ok(values)
    }
}

/// Turns surprisals into a document with placeholder token text.
pub fn document(doc_id: String, label: Option<String>, values: &[f64]) -> SurprisalSequence {
    let tokens = values
        .iter()
        .enumerate()
        .map(|(i, &s)| TokenSurprisal::new(format!(" w{i}"), s))
        .collect();
    SurprisalSequence::new(doc_id, label, tokens)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusBuilder {
    pub authors: Vec<AuthorProfile>,
}

impl CorpusBuilder {
    pub fn new(authors: Vec<AuthorProfile>) -> Self {
        Self { authors }
    }

    pub fn label_set(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.authors.iter().map(|a| a.name.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// `per_author` labeled documents for every author, interleaved by author.
    /// Each document has its own RNG stream derived from `(seed, author, i)`.
    pub fn try_generate(&self, per_author: usize, seed: u64, prefix: &str) -> Result<Vec<SurprisalSequence>> {
        let mut docs = Vec::with_capacity(per_author * self.authors.len());
        for i in 0..per_author {
            for (a, author) in self.authors.iter().enumerate() {
                let stream = (a as u64) << 40 | i as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let values = author.sample_surprisals(&mut rng)?;
                docs.push(document(
                    format!("{prefix}-{}-{i:05}", author.name),
                    Some(author.name.clone()),
                    &values,
                ));
            }
        }
        Ok(docs)
    }

    /// Like [`try_generate`](Self::try_generate); panics on an invalid profile.
    pub fn generate(&self, per_author: usize, seed: u64, prefix: &str) -> Vec<SurprisalSequence> {
        self.try_generate(per_author, seed, prefix)
            .expect("valid author profiles")
    }
}
