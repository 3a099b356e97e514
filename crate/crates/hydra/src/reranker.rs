//! Usefulness reranking of retrieved history.
//!
//! Training data pairs queries with candidate history items: the user's
//! main query is paired with its top-M retrieved items, and M sampled
//! history items act as pseudo-queries, each paired with its own top-M
//! retrieved items (the sampled item itself excluded). An LLM labels each
//! pair by whether conditioning on the candidate makes the answer match the
//! gold. At inference the head scores the BM25 top-N and keeps the k most
//! useful.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{HistoryItem, TaskSpec, UserRecord};
use crate::error::{HydraError, Result};
use crate::hashing::mix64;
use crate::llm::{build_rag_prompt, label_for_task, GenerationRequest, TextGenerator};
use crate::model::{FactorizedModel, TrainConfig, TrainExample};
use crate::retriever::{build_index, retrieve_top, HistoryIndex, Tokenizer};

/// Where a training example came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MainQuery,
    SampledHistory,
}

/// One labeled (query, candidate history) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerExample {
    pub user_id: String,
    pub x: String,
    pub y: u8,
    pub provenance: Provenance,
}

/// A candidate awaiting labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankerCandidate {
    pub query: String,
    pub gold: String,
    pub item: HistoryItem,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    /// Retrieval depth during training-candidate construction.
    pub m: usize,
    /// Retrieval depth at inference.
    pub n: usize,
    /// Number of items kept after reranking.
    pub k: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig { m: 4, n: 20, k: 4 }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(HydraError::Config("rerank m must be at least 1".into()));
        }
        if self.k > self.n {
            return Err(HydraError::Config(format!(
                "rerank k ({}) must not exceed n ({})",
                self.k, self.n
            )));
        }
        Ok(())
    }
}

/// Entailment-style model input for a (query, history) pair.
pub fn reranker_input(query: &str, item: &HistoryItem) -> String {
    format!("[CLS] {} [SEP] {} [SEP]", query, item.full_text())
}

fn user_index(user: &UserRecord) -> HistoryIndex {
    build_index(&user.history, Tokenizer::default())
}

/// Training candidates for one user: the main query with its top-M
/// retrieved items, plus M sampled pseudo-queries each with their top-M
/// retrieved items from the rest of the history. Returns an empty list for
/// histories of fewer than two items (the caller skips such users).
pub fn gen_reranker_candidates(
    user: &UserRecord,
    cfg: &RerankConfig,
    seed: u64,
) -> Vec<RerankerCandidate> {
    if user.history.len() < 2 {
        return Vec::new();
    }
    let index = user_index(user);
    let mut out = Vec::new();
    for (ord, _) in retrieve_top(&index, &user.query, cfg.m, &[]) {
        out.push(RerankerCandidate {
            query: user.query.clone(),
            gold: user.gold.clone(),
            item: user.history[ord].clone(),
            provenance: Provenance::MainQuery,
        });
    }
    out.extend(sampled_history_candidates(user, &index, cfg, seed));
    out
}

/// Only the pseudo-query arm, used to fit test-user heads from history
/// alone (their gold answers stay unseen).
pub fn gen_history_candidates(
    user: &UserRecord,
    cfg: &RerankConfig,
    seed: u64,
) -> Vec<RerankerCandidate> {
    if user.history.len() < 2 {
        return Vec::new();
    }
    let index = user_index(user);
    sampled_history_candidates(user, &index, cfg, seed)
}

fn sampled_history_candidates(
    user: &UserRecord,
    index: &HistoryIndex,
    cfg: &RerankConfig,
    seed: u64,
) -> Vec<RerankerCandidate> {
    let h_len = user.history.len();
    let n_sampled = cfg.m.min(h_len);
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
    let sampled = rand::seq::index::sample(&mut rng, h_len, n_sampled);

    let mut out = Vec::new();
    for pseudo_ord in sampled {
        let pseudo = &user.history[pseudo_ord];
        let depth = cfg.m.min(h_len - 1);
        for (ord, _) in retrieve_top(index, &pseudo.full_text(), depth, &[pseudo_ord]) {
            out.push(RerankerCandidate {
                query: pseudo.query_text.clone(),
                // The pseudo-query's own answer is the only available gold.
                gold: pseudo.answer_text.clone(),
                item: user.history[ord].clone(),
                provenance: Provenance::SampledHistory,
            });
        }
    }
    out
}

/// Closed form for the number of candidates [`gen_reranker_candidates`]
/// produces for a history of `h_len` items.
pub fn expected_candidate_count(h_len: usize, m: usize) -> usize {
    if h_len < 2 {
        return 0;
    }
    m.min(h_len) + m.min(h_len) * m.min(h_len - 1)
}

/// Label candidates by sampling one generation conditioned on the candidate
/// item alone and comparing it with the gold.
pub fn label_candidates(
    user_id: &str,
    candidates: &[RerankerCandidate],
    task: &TaskSpec,
    backend: &dyn TextGenerator,
    label_temperature: f64,
    rouge_threshold: f64,
    seed: u64,
) -> Result<Vec<RerankerExample>> {
    let mut out = Vec::with_capacity(candidates.len());
    for (i, cand) in candidates.iter().enumerate() {
        let prompt = build_rag_prompt(task, std::slice::from_ref(&cand.item), &cand.query);
        let req = GenerationRequest {
            prompt: prompt.aip,
            n_samples: 1,
            temperature: label_temperature,
            max_tokens: 128,
            seed: mix64(seed.wrapping_add(i as u64)),
        };
        let generated = backend
            .generate(&req)
            .map_err(|e| HydraError::Backend(format!("labeling candidate {i}: {e}")))?;
        let y = label_for_task(task, &generated[0], &cand.gold, rouge_threshold);
        out.push(RerankerExample {
            user_id: user_id.to_string(),
            x: reranker_input(&cand.query, &cand.item),
            y,
            provenance: cand.provenance,
        });
    }
    Ok(out)
}

/// Joint base + per-user-head training over labeled examples, routed by
/// `user_id`.
pub fn train_reranker(
    model: &mut FactorizedModel,
    examples: &[RerankerExample],
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

/// An item with its usefulness score and its position in the BM25 ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub item: HistoryItem,
    pub score: f64,
    pub bm25_rank: usize,
}

/// Keep the k highest-scoring items; ties resolve toward the better BM25
/// rank. The result is ordered by descending usefulness.
pub fn select_topk(mut scored: Vec<ScoredItem>, k: usize) -> Vec<ScoredItem> {
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.bm25_rank.cmp(&b.bm25_rank))
    });
    scored.truncate(k);
    scored
}

/// Retrieve top-N by BM25, score each (query, item) pair with the user's
/// head, and return the k most useful items with their scores.
pub fn rerank_scored(
    model: &FactorizedModel,
    head_key: &str,
    query: &str,
    history: &[HistoryItem],
    cfg: &RerankConfig,
    exclude: &[usize],
) -> Result<Vec<ScoredItem>> {
    let index = build_index(history, Tokenizer::default());
    let retrieved = retrieve_top(&index, query, cfg.n, exclude);
    let mut scored = Vec::with_capacity(retrieved.len());
    for (rank, (ord, _)) in retrieved.into_iter().enumerate() {
        let item = history[ord].clone();
        let score = model.score(head_key, &reranker_input(query, &item))?;
        scored.push(ScoredItem {
            item,
            score,
            bm25_rank: rank,
        });
    }
    Ok(select_topk(scored, cfg.k))
}

/// [`rerank_scored`] without the scores.
pub fn rerank_topk(
    model: &FactorizedModel,
    head_key: &str,
    query: &str,
    history: &[HistoryItem],
    cfg: &RerankConfig,
    exclude: &[usize],
) -> Result<Vec<HistoryItem>> {
    Ok(
        rerank_scored(model, head_key, query, history, cfg, exclude)?
            .into_iter()
            .map(|s| s.item)
            .collect(),
    )
}
