//! Feature-hashed n-gram text encoder.
//!
//! Texts become sparse vectors by hashing word n-grams (1..=ngram_max) into
//! `hash_dim` buckets with FNV-1a. Counts are scaled by 1/sqrt(total grams)
//! so vectors of different lengths live on a comparable scale.

use serde::{Deserialize, Serialize};

use crate::error::{HydraError, Result};
use crate::hashing::fnv1a64;
use crate::retriever::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    /// Width of the hashed feature space.
    pub hash_dim: usize,
    /// Hidden state dimension produced by the base transform.
    pub hidden_dim: usize,
    /// Largest n-gram order hashed (1 = unigrams only).
    pub ngram_max: usize,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        TextEncoderConfig {
            hash_dim: 4096,
            hidden_dim: 64,
            ngram_max: 2,
        }
    }
}

impl TextEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < 1 || self.hash_dim < self.hidden_dim {
            return Err(HydraError::Config(format!(
                "encoder dims must satisfy hash_dim >= hidden_dim >= 1, got {} and {}",
                self.hash_dim, self.hidden_dim
            )));
        }
        if self.ngram_max < 1 {
            return Err(HydraError::Config("ngram_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Bucket index for one n-gram. Tokens are joined with a unit separator so
/// ("a b") and ("a", "b") cannot alias.
pub fn gram_bucket(tokens: &[String], hash_dim: usize) -> usize {
    (fnv1a64(tokens.join("\u{1f}").as_bytes()) % hash_dim as u64) as usize
}

/// Sparse hashed features, sorted by bucket index. Empty text maps to the
/// zero vector.
pub fn hash_features(text: &str, config: &TextEncoderConfig) -> Vec<(usize, f64)> {
    let tokens = Tokenizer::default().tokenize(text);
    let mut counts: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    let mut total = 0usize;
    for n in 1..=config.ngram_max {
        if tokens.len() < n {
            break;
        }
        for window in tokens.windows(n) {
            *counts
                .entry(gram_bucket(window, config.hash_dim))
                .or_insert(0.0) += 1.0;
            total += 1;
        }
    }
    if total == 0 {
        return Vec::new();
    }
    let scale = 1.0 / (total as f64).sqrt();
    counts.into_iter().map(|(i, c)| (i, c * scale)).collect()
}
