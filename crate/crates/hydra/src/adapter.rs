//! Best-of-b output selection.
//!
//! Adapter training uses every (query, answer) pair a user offers: the
//! main query plus all history pairs. For each pair, `b` responses are
//! sampled from the LLM conditioned on the reranked history, labeled
//! against the pair's gold, and used to train the factorized scorer. At
//! inference the user's head scores the `b` sampled candidates and the
//! highest-scoring one becomes the answer (rejection sampling).

use serde::{Deserialize, Serialize};

use crate::datamodel::{HistoryItem, TaskSpec, UserRecord};
use crate::error::{HydraError, Result};
use crate::llm::{build_rag_prompt, label_for_task, GenerationRequest, TextGenerator};
use crate::model::{FactorizedModel, TrainConfig, TrainExample};

/// One labeled (query, generation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterExample {
    pub user_id: String,
    pub x: String,
    pub y: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// Samples drawn per query.
    pub b: usize,
    /// Sampling temperature for candidate generation.
    pub temperature: f64,
    pub max_tokens: usize,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            b: 8,
            temperature: 1.0,
            max_tokens: 512,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b < 1 {
            return Err(HydraError::Config("adapter b must be at least 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(HydraError::Config(
                "adapter temperature must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Model input pairing a query with one candidate generation.
pub fn adapter_input(query: &str, generation: &str) -> String {
    format!("[CLS] {query} [SEP] {generation} [SEP]")
}

/// Every (query, gold) pair the user contributes: the main query first,
/// then the history pairs in history order. Count = 1 + |history|.
pub fn gen_adapter_candidates(user: &UserRecord) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(1 + user.history.len());
    out.push((user.query.clone(), user.gold.clone()));
    for item in &user.history {
        out.push((item.query_text.clone(), item.answer_text.clone()));
    }
    out
}

/// History pairs only, used when fitting a test user's head (their main
/// gold stays unseen).
pub fn gen_history_pairs(user: &UserRecord) -> Vec<(String, String)> {
    user.history
        .iter()
        .map(|item| (item.query_text.clone(), item.answer_text.clone()))
        .collect()
}

/// Sample exactly `b` responses for the query conditioned on the selected
/// history items.
pub fn sample_generations(
    query: &str,
    reranked: &[HistoryItem],
    cfg: &AdapterConfig,
    backend: &dyn TextGenerator,
    task: &TaskSpec,
    seed: u64,
) -> Result<Vec<String>> {
    cfg.validate()?;
    let prompt = build_rag_prompt(task, reranked, query);
    let req = GenerationRequest {
        prompt: prompt.aip,
        n_samples: cfg.b,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        seed,
    };
    backend.generate(&req)
}

/// One example per generation, labeled against the gold.
pub fn label_adapter_examples(
    user_id: &str,
    query: &str,
    gold: &str,
    generations: &[String],
    task: &TaskSpec,
    rouge_threshold: f64,
) -> Vec<AdapterExample> {
    generations
        .iter()
        .map(|generation| AdapterExample {
            user_id: user_id.to_string(),
            x: adapter_input(query, generation),
            y: label_for_task(task, generation, gold, rouge_threshold),
        })
        .collect()
}

/// Joint base + per-user-head training, routed by `user_id`.
pub fn train_adapter(
    model: &mut FactorizedModel,
    examples: &[AdapterExample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let train_examples: Vec<TrainExample> = examples
        .iter()
        .map(|ex| TrainExample {
            head_key: ex.user_id.clone(),
            text: ex.x.clone(),
            label: ex.y,
        })
        .collect();
    model.train_multi_user(&train_examples, cfg, seed)
}

/// Index of the highest score, lowest index on ties.
pub fn select_best(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Score each generation with the user's head and return the winner.
pub fn best_of_b(
    model: &FactorizedModel,
    head_key: &str,
    query: &str,
    generations: &[String],
) -> Result<String> {
    let scores = score_generations(model, head_key, query, generations)?;
    Ok(generations[select_best(&scores)].clone())
}

/// The usefulness score `p[1]` for every generation.
pub fn score_generations(
    model: &FactorizedModel,
    head_key: &str,
    query: &str,
    generations: &[String],
) -> Result<Vec<f64>> {
    if generations.is_empty() {
        return Err(HydraError::InvalidArgument(
            "best-of-b selection needs at least one generation".into(),
        ));
    }
    generations
        .iter()
        .map(|g| model.score(head_key, &adapter_input(query, g)))
        .collect()
}
