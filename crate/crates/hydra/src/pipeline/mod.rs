//! End-to-end orchestration: dataset preparation, baselines, the full
//! personalization pipeline, caching, and audit dumps.
//!
//! The learned pipeline runs the phases in a fixed order. For the reranker:
//! build labeled training candidates from train users, train the base and
//! per-user heads jointly, then freeze the base and fit fresh heads for
//! test users from their history alone. The adapter repeats the same
//! pattern on (query, sampled generation) pairs and finishes with
//! best-of-b selection over `b` sampled candidates per test query.
//!
//! One master seed derives every phase seed by labeled hashing, so any
//! phase can be reproduced in isolation and two identical runs produce
//! byte-identical artifacts.

mod audit;
mod cache;
mod config;

pub use audit::{read_jsonl, write_jsonl, GenerationRow, PredictionRow, RerankRow};
pub use cache::{cache_key, CacheStats, LlmCache};
pub use config::{apply_config_file, apply_config_pair};

/// Labeled phase seed derived from the master seed.
pub use crate::hashing::derive_seed as phase_seed;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::{
    adapter_input, gen_adapter_candidates, gen_history_pairs, label_adapter_examples,
    sample_generations, select_best, AdapterConfig, AdapterExample,
};
use crate::datamodel::{
    load_dataset, make_synthetic_task, split_users, Dataset, TaskId, TaskKind, TaskSpec, UserRecord,
};
use crate::error::{HydraError, Result};
use crate::hashing::derive_seed;
use crate::llm::{
    build_pag_summary_prompt, build_rag_prompt, label_exact, GenerationRequest, HttpBackend,
    HttpConfig, LlmBackend, Simulator, SimulatorBehavior, TextGenerator,
};
use crate::metrics::{self, MetricReport};
use crate::model::{FactorizedModel, TextEncoderConfig, TrainConfig, TrainExample};
use crate::reranker::{
    gen_history_candidates, gen_reranker_candidates, label_candidates, rerank_scored, rerank_topk,
    RerankConfig, RerankerExample,
};
use crate::retriever::{build_index, retrieve_top, Tokenizer};

/// Head key used when personalization is ablated to a single shared head.
pub const SHARED_HEAD_KEY: &str = "__shared__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ZeroShot,
    IclRandom,
    Rag,
    Pag,
    HydraRerankerOnly,
    HydraAdapterOnly,
    HydraFull,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "zero-shot" | "zeroshot" => Ok(Mode::ZeroShot),
            "icl-random" | "icl" => Ok(Mode::IclRandom),
            "rag" => Ok(Mode::Rag),
            "pag" => Ok(Mode::Pag),
            "hydra-reranker-only" | "reranker-only" => Ok(Mode::HydraRerankerOnly),
            "hydra-adapter-only" | "adapter-only" => Ok(Mode::HydraAdapterOnly),
            "hydra-full" | "hydra" | "full" => Ok(Mode::HydraFull),
            other => Err(HydraError::Config(format!("unknown mode: {other}"))),
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(
            self,
            Mode::ZeroShot | Mode::IclRandom | Mode::Rag | Mode::Pag
        )
    }
}

/// Replaces per-user heads with one shared head for the flagged component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub no_personal_reranker: bool,
    pub no_personal_adapter: bool,
}

/// How best-of-b candidates are scored at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterScoring {
    /// The trained factorized model (normal operation).
    Learned,
    /// Exact-match oracle against the gold; a diagnostic ceiling equal to
    /// the chance that any sampled candidate is right.
    OracleUpperBound,
}

/// Which simulator behavior a simulator-backed run installs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatorKind {
    /// Label sampling for classification tasks, templated text otherwise.
    Auto,
    Templated,
    LabelSampler,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendConfig {
    Simulator {
        kind: SimulatorKind,
        /// Weight on prompt label mentions when sampling; 0 = ignore the
        /// prompt entirely.
        icl_weight: f64,
    },
    Http(HttpConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Simulator {
            kind: SimulatorKind::Auto,
            icl_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskId,
    /// Pre-split dataset (.json) or raw user JSONL (needs n_train/n_test).
    pub data_path: Option<PathBuf>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    /// Synthetic dataset shape when no data path is given.
    pub synth_users: usize,
    pub synth_history: usize,
    pub mode: Mode,
    pub backend: BackendConfig,
    pub rerank: RerankConfig,
    pub adapter: AdapterConfig,
    pub reranker_train: TrainConfig,
    pub adapter_train: TrainConfig,
    /// Temperature used when the LLM labels training candidates.
    pub label_temperature: f64,
    /// ROUGE-1 F1 threshold for softened labels on generation tasks.
    pub rouge_threshold: f64,
    pub ablation: AblationFlags,
    pub adapter_scoring: AdapterScoring,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    /// When false, temperature-0 HTTP calls bypass the cache.
    pub cache_temp0_http: bool,
    /// Concurrent backend calls during generation fan-out.
    pub in_flight: usize,
    pub encoder: TextEncoderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskId::Synthetic,
            data_path: None,
            n_train: None,
            n_test: None,
            synth_users: 12,
            synth_history: 20,
            mode: Mode::HydraFull,
            backend: BackendConfig::default(),
            rerank: RerankConfig::default(),
            adapter: AdapterConfig::default(),
            reranker_train: TrainConfig::default(),
            adapter_train: TrainConfig::default(),
            label_temperature: 1.0,
            rouge_threshold: 0.5,
            ablation: AblationFlags::default(),
            adapter_scoring: AdapterScoring::Learned,
            seed: 7,
            out_dir: PathBuf::from("hydra_out"),
            cache_dir: None,
            cache_temp0_http: true,
            in_flight: 4,
            encoder: TextEncoderConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.rerank.validate()?;
        self.adapter.validate()?;
        self.reranker_train.validate()?;
        self.adapter_train.validate()?;
        self.encoder.validate()?;
        if self.label_temperature < 0.0 {
            return Err(HydraError::Config(
                "label temperature must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.rouge_threshold) {
            return Err(HydraError::Config(
                "rouge threshold must be within [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Backend plus optional response cache; all pipeline generation goes
/// through here.
pub struct LlmClient {
    backend: LlmBackend,
    cache: Option<LlmCache>,
    cache_temp0_http: bool,
}

impl LlmClient {
    pub fn new(backend: LlmBackend, cache: Option<LlmCache>, cache_temp0_http: bool) -> Self {
        LlmClient {
            backend,
            cache,
            cache_temp0_http,
        }
    }

    pub fn backend_calls(&self) -> u64 {
        self.backend.call_count()
    }

    pub fn cache_stats(&self) -> Option<CacheStats> {
        self.cache.as_ref().map(|c| c.stats())
    }

    fn bypass_cache(&self, req: &GenerationRequest) -> bool {
        !self.cache_temp0_http
            && req.temperature == 0.0
            && matches!(self.backend, LlmBackend::Http(_))
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        match &self.cache {
            Some(cache) if !self.bypass_cache(req) => {
                let key = cache_key(&self.backend.cache_fingerprint(), req);
                if let Some(hit) = cache.get(&key, req.n_samples) {
                    return Ok(hit);
                }
                let out = self.backend.generate(req)?;
                cache.put(&key, &out);
                Ok(out)
            }
            _ => self.backend.generate(req),
        }
    }

    /// Serve many requests with at most `in_flight` running concurrently.
    /// Results keep the input order, so downstream artifacts stay
    /// deterministic regardless of completion order.
    pub fn generate_many(
        &self,
        requests: &[GenerationRequest],
        in_flight: usize,
    ) -> Result<Vec<Vec<String>>> {
        let limit = in_flight.max(1);
        let mut results: Vec<Option<Result<Vec<String>>>> =
            (0..requests.len()).map(|_| None).collect();
        for (chunk_idx, chunk) in requests.chunks(limit).enumerate() {
            let outputs: Vec<Result<Vec<String>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|req| scope.spawn(move || self.generate(req)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("generation thread"))
                    .collect()
            });
            for (i, out) in outputs.into_iter().enumerate() {
                results[chunk_idx * limit + i] = Some(out);
            }
        }
        results
            .into_iter()
            .map(|r| r.expect("all slots filled"))
            .collect()
    }
}

impl TextGenerator for LlmClient {
    fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        LlmClient::generate(self, req)
    }
}

/// Build the configured backend. Simulator runs need no credentials; HTTP
/// runs read the API key from the environment.
pub fn build_client(cfg: &RunConfig, task: &TaskSpec) -> Result<LlmClient> {
    let backend = match &cfg.backend {
        BackendConfig::Http(http_cfg) => LlmBackend::Http(HttpBackend::new(http_cfg.clone())?),
        BackendConfig::Simulator { kind, icl_weight } => {
            let behavior = match kind {
                SimulatorKind::Templated => SimulatorBehavior::Templated,
                SimulatorKind::LabelSampler => SimulatorBehavior::LabelSampler {
                    labels: task.label_set.clone(),
                    icl_weight: *icl_weight,
                },
                SimulatorKind::Auto => match task.kind {
                    TaskKind::Categorical | TaskKind::Ordinal => SimulatorBehavior::LabelSampler {
                        labels: task.label_set.clone(),
                        icl_weight: *icl_weight,
                    },
                    TaskKind::Generation => SimulatorBehavior::Templated,
                },
            };
            LlmBackend::Simulator(Simulator::new(behavior))
        }
    };
    let cache = match &cfg.cache_dir {
        Some(dir) => Some(LlmCache::open(dir.clone())?),
        None => None,
    };
    Ok(LlmClient::new(backend, cache, cfg.cache_temp0_http))
}

/// Load, split, or synthesize the dataset named by the config.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let task = TaskSpec::for_task(cfg.task);
    match &cfg.data_path {
        Some(path) => {
            let is_json = path.extension().map(|e| e == "json").unwrap_or(false);
            if is_json {
                let ds = Dataset::load_json(path)?;
                if ds.task.task_id != cfg.task {
                    return Err(HydraError::Config(format!(
                        "dataset file is for task {} but the run asks for {}",
                        ds.task.task_id, cfg.task
                    )));
                }
                Ok(ds)
            } else {
                let ds = load_dataset(path, task)?;
                match (cfg.n_train, cfg.n_test) {
                    (Some(n_train), Some(n_test)) => {
                        split_users(&ds, n_train, n_test, derive_seed(cfg.seed, "split"))
                    }
                    _ => Err(HydraError::Config(
                        "raw JSONL input needs n_train and n_test for the user split".into(),
                    )),
                }
            }
        }
        None if cfg.task == TaskId::Synthetic => make_synthetic_task(
            cfg.synth_users,
            cfg.synth_history,
            derive_seed(cfg.seed, "synth"),
        ),
        None => Err(HydraError::Config(format!(
            "task {} needs a data path (only the synthetic task can be generated)",
            cfg.task
        ))),
    }
}

fn head_key(shared: bool, user_id: &str) -> &str {
    if shared {
        SHARED_HEAD_KEY
    } else {
        user_id
    }
}

// ---------------------------------------------------------------------------
// Reranker phases
// ---------------------------------------------------------------------------

/// Labeled training examples over all train users (skipping users with
/// fewer than two history items).
pub fn reranker_training_data(
    ds: &Dataset,
    client: &LlmClient,
    cfg: &RunConfig,
) -> Result<Vec<RerankerExample>> {
    let seed = derive_seed(cfg.seed, "reranker.datagen");
    let mut out = Vec::new();
    for user in &ds.train_users {
        let cands = gen_reranker_candidates(user, &cfg.rerank, derive_seed(seed, &user.user_id));
        if cands.is_empty() {
            log::warn!("skipping user {} (history too short)", user.user_id);
            continue;
        }
        out.extend(label_candidates(
            &user.user_id,
            &cands,
            &ds.task,
            client,
            cfg.label_temperature,
            cfg.rouge_threshold,
            derive_seed(seed, &format!("label:{}", user.user_id)),
        )?);
    }
    Ok(out)
}

/// Labeled fitting examples for test users, built from their history alone.
pub fn reranker_fit_data(
    ds: &Dataset,
    client: &LlmClient,
    cfg: &RunConfig,
) -> Result<Vec<RerankerExample>> {
    let seed = derive_seed(cfg.seed, "reranker.fitgen");
    let mut out = Vec::new();
    for user in &ds.test_users {
        let cands = gen_history_candidates(user, &cfg.rerank, derive_seed(seed, &user.user_id));
        if cands.is_empty() {
            log::warn!("skipping test user {} (history too short)", user.user_id);
            continue;
        }
        out.extend(label_candidates(
            &user.user_id,
            &cands,
            &ds.task,
            client,
            cfg.label_temperature,
            cfg.rouge_threshold,
            derive_seed(seed, &format!("label:{}", user.user_id)),
        )?);
    }
    Ok(out)
}

/// Train a fresh factorized model over labeled examples. With the shared
/// ablation every example routes to one head.
pub fn train_component_model(
    examples: impl Iterator<Item = (String, String, u8)>,
    shared: bool,
    encoder: TextEncoderConfig,
    train_cfg: &TrainConfig,
    init_seed: u64,
    shuffle_seed: u64,
) -> Result<FactorizedModel> {
    let mut model = FactorizedModel::new(encoder, init_seed)?;
    let train_examples: Vec<TrainExample> = examples
        .map(|(user_id, text, label)| TrainExample {
            head_key: head_key(shared, &user_id).to_string(),
            text,
            label,
        })
        .collect();
    model.train_multi_user(&train_examples, train_cfg, shuffle_seed)?;
    Ok(model)
}

/// Freeze the base and fit heads for test users. Per-user: one fresh head
/// per user over that user's examples. Shared ablation: the training head
/// is dropped and a single fresh head is fitted over all examples in user
/// order.
pub fn fit_test_heads(
    model: &mut FactorizedModel,
    examples_by_user: &[(String, Vec<(String, u8)>)],
    shared: bool,
    train_cfg: &TrainConfig,
) -> Result<()> {
    if shared {
        model.remove_head(SHARED_HEAD_KEY);
        let merged: Vec<(String, u8)> = examples_by_user
            .iter()
            .flat_map(|(_, ex)| ex.iter().cloned())
            .collect();
        model.fit_new_head(SHARED_HEAD_KEY, &merged, train_cfg)?;
    } else {
        for (user_id, examples) in examples_by_user {
            model.fit_new_head(user_id, examples, train_cfg)?;
        }
    }
    Ok(())
}

fn group_reranker_examples(examples: &[RerankerExample]) -> Vec<(String, Vec<(String, u8)>)> {
    group_by_user(
        examples
            .iter()
            .map(|e| (e.user_id.clone(), (e.x.clone(), e.y))),
    )
}

fn group_adapter_examples(examples: &[AdapterExample]) -> Vec<(String, Vec<(String, u8)>)> {
    group_by_user(
        examples
            .iter()
            .map(|e| (e.user_id.clone(), (e.x.clone(), e.y))),
    )
}

/// Ensure every listed user appears in the grouping, so users whose
/// histories produced no examples still get an initialized head.
fn with_all_users(
    mut grouped: Vec<(String, Vec<(String, u8)>)>,
    users: &[UserRecord],
) -> Vec<(String, Vec<(String, u8)>)> {
    for user in users {
        if !grouped.iter().any(|(id, _)| id == &user.user_id) {
            grouped.push((user.user_id.clone(), Vec::new()));
        }
    }
    grouped.sort_by(|a, b| a.0.cmp(&b.0));
    grouped
}

fn group_by_user(
    rows: impl Iterator<Item = (String, (String, u8))>,
) -> Vec<(String, Vec<(String, u8)>)> {
    let mut grouped: BTreeMap<String, Vec<(String, u8)>> = BTreeMap::new();
    for (user, row) in rows {
        grouped.entry(user).or_default().push(row);
    }
    grouped.into_iter().collect()
}

/// Group (user_id, text, label) rows by user, sorted by user id.
pub fn group_examples(
    rows: impl Iterator<Item = (String, String, u8)>,
) -> Vec<(String, Vec<(String, u8)>)> {
    group_by_user(rows.map(|(user, text, label)| (user, (text, label))))
}

/// Rerank every test query and collect the audit rows.
pub fn rerank_scored_rows(
    ds: &Dataset,
    model: &FactorizedModel,
    shared: bool,
    rerank: &RerankConfig,
) -> Result<Vec<RerankRow>> {
    let mut rows = Vec::new();
    for user in &ds.test_users {
        let scored = rerank_scored(
            model,
            head_key(shared, &user.user_id),
            &user.query,
            &user.history,
            rerank,
            &[],
        )?;
        rows.push(RerankRow {
            user_id: user.user_id.clone(),
            query: user.query.clone(),
            item_ids: scored.iter().map(|s| s.item.item_id.clone()).collect(),
            scores: scored.iter().map(|s| s.score).collect(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Context selection (BM25 or reranked)
// ---------------------------------------------------------------------------

/// Chooses the history items that accompany a query: plain BM25 top-k, or
/// the reranker's usefulness top-k when a reranker model is available.
pub struct ContextSelector<'a> {
    reranker: Option<&'a FactorizedModel>,
    shared_reranker: bool,
    rerank: RerankConfig,
}

impl<'a> ContextSelector<'a> {
    pub fn bm25(rerank: RerankConfig) -> Self {
        ContextSelector {
            reranker: None,
            shared_reranker: false,
            rerank,
        }
    }

    pub fn reranked(model: &'a FactorizedModel, shared: bool, rerank: RerankConfig) -> Self {
        ContextSelector {
            reranker: Some(model),
            shared_reranker: shared,
            rerank,
        }
    }

    /// Top-k context for a query over the user's history, optionally
    /// excluding one ordinal (a history pair used as the query itself).
    /// Users the reranker never saw (histories too short to build
    /// candidates from) fall back to plain BM25.
    pub fn select(
        &self,
        user: &UserRecord,
        query: &str,
        exclude_ord: Option<usize>,
    ) -> Result<Vec<crate::datamodel::HistoryItem>> {
        let exclude: Vec<usize> = exclude_ord.into_iter().collect();
        match self.reranker {
            Some(model) if model.has_head(head_key(self.shared_reranker, &user.user_id)) => {
                rerank_topk(
                    model,
                    head_key(self.shared_reranker, &user.user_id),
                    query,
                    &user.history,
                    &self.rerank,
                    &exclude,
                )
            }
            _ => {
                let index = build_index(&user.history, Tokenizer::default());
                Ok(retrieve_top(&index, query, self.rerank.k, &exclude)
                    .into_iter()
                    .map(|(ord, _)| user.history[ord].clone())
                    .collect())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Adapter phases
// ---------------------------------------------------------------------------

/// Labeled adapter examples for train users: every (query, gold) pair the
/// user offers, with `b` sampled generations each. History pairs exclude
/// themselves from their own context.
pub fn adapter_training_data(
    ds: &Dataset,
    client: &LlmClient,
    selector: &ContextSelector,
    cfg: &RunConfig,
) -> Result<Vec<AdapterExample>> {
    let seed = derive_seed(cfg.seed, "adapter.datagen");
    let mut out = Vec::new();
    for user in &ds.train_users {
        for (ci, (query, gold)) in gen_adapter_candidates(user).into_iter().enumerate() {
            // Candidate 0 is the main query; candidate i > 0 is history
            // pair i-1 and must not retrieve itself.
            let exclude = if ci == 0 { None } else { Some(ci - 1) };
            let items = selector.select(user, &query, exclude)?;
            let gens = sample_generations(
                &query,
                &items,
                &cfg.adapter,
                client,
                &ds.task,
                derive_seed(seed, &format!("{}:{}", user.user_id, ci)),
            )?;
            out.extend(label_adapter_examples(
                &user.user_id,
                &query,
                &gold,
                &gens,
                &ds.task,
                cfg.rouge_threshold,
            ));
        }
    }
    Ok(out)
}

/// Labeled adapter examples for test users from history pairs only.
pub fn adapter_fit_data(
    ds: &Dataset,
    client: &LlmClient,
    selector: &ContextSelector,
    cfg: &RunConfig,
) -> Result<Vec<AdapterExample>> {
    let seed = derive_seed(cfg.seed, "adapter.fitgen");
    let mut out = Vec::new();
    for user in &ds.test_users {
        for (hi, (query, gold)) in gen_history_pairs(user).into_iter().enumerate() {
            let items = selector.select(user, &query, Some(hi))?;
            let gens = sample_generations(
                &query,
                &items,
                &cfg.adapter,
                client,
                &ds.task,
                derive_seed(seed, &format!("{}:{}", user.user_id, hi)),
            )?;
            out.extend(label_adapter_examples(
                &user.user_id,
                &query,
                &gold,
                &gens,
                &ds.task,
                cfg.rouge_threshold,
            ));
        }
    }
    Ok(out)
}

/// Best-of-b inference over test queries. Candidate sampling fans out
/// across users up to the configured in-flight limit; scoring and
/// selection stay in dataset order. Returns per-query generation records
/// and final predictions.
pub fn adapter_inference(
    ds: &Dataset,
    client: &LlmClient,
    selector: &ContextSelector,
    adapter_model: &FactorizedModel,
    cfg: &RunConfig,
) -> Result<(Vec<GenerationRow>, Vec<PredictionRow>)> {
    let seed = derive_seed(cfg.seed, "adapter.infer");
    let shared = cfg.ablation.no_personal_adapter;

    let requests: Vec<GenerationRequest> = ds
        .test_users
        .iter()
        .map(|user| {
            let items = selector.select(user, &user.query, None)?;
            Ok(GenerationRequest {
                prompt: build_rag_prompt(&ds.task, &items, &user.query).aip,
                n_samples: cfg.adapter.b,
                temperature: cfg.adapter.temperature,
                max_tokens: cfg.adapter.max_tokens,
                seed: derive_seed(seed, &user.user_id),
            })
        })
        .collect::<Result<_>>()?;
    let sampled = client.generate_many(&requests, cfg.in_flight)?;

    let mut gen_rows = Vec::new();
    let mut predictions = Vec::new();
    for (user, generations) in ds.test_users.iter().zip(sampled) {
        let scores: Vec<f64> = match cfg.adapter_scoring {
            AdapterScoring::Learned => {
                let key = head_key(shared, &user.user_id);
                generations
                    .iter()
                    .map(|g| adapter_model.score(key, &adapter_input(&user.query, g)))
                    .collect::<Result<Vec<f64>>>()?
            }
            AdapterScoring::OracleUpperBound => generations
                .iter()
                .map(|g| label_exact(g, &user.gold) as f64)
                .collect(),
        };
        let chosen = select_best(&scores);
        predictions.push(PredictionRow {
            user_id: user.user_id.clone(),
            query: user.query.clone(),
            prediction: generations[chosen].clone(),
            gold: user.gold.clone(),
        });
        gen_rows.push(GenerationRow {
            user_id: user.user_id.clone(),
            query: user.query.clone(),
            gold: user.gold.clone(),
            generations,
            scores,
            chosen,
        });
    }
    Ok((gen_rows, predictions))
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Map a free-text prediction onto the label set: normalized equality
/// first, then the longest label whose token sequence appears in the
/// prediction, else the first label.
pub fn map_to_label(prediction: &str, label_set: &[String]) -> String {
    let norm = metrics::normalize(prediction);
    for label in label_set {
        if metrics::normalize(label) == norm {
            return label.clone();
        }
    }
    let tok = Tokenizer::default();
    let pred_tokens = tok.tokenize(prediction);
    let mut best: Option<&String> = None;
    for label in label_set {
        let label_tokens = tok.tokenize(label);
        if label_tokens.is_empty() || label_tokens.len() > pred_tokens.len() {
            continue;
        }
        let found = pred_tokens
            .windows(label_tokens.len())
            .any(|w| w == label_tokens.as_slice());
        if found && best.map(|b| label.len() > b.len()).unwrap_or(true) {
            best = Some(label);
        }
    }
    match best {
        Some(label) => label.clone(),
        None => {
            log::warn!("prediction {prediction:?} matches no label; using the first label");
            label_set[0].clone()
        }
    }
}

/// Task-appropriate metric report. Accuracy is computed on raw predictions;
/// macro-F1 maps predictions onto the label set first.
pub fn evaluate_predictions(
    task: &TaskSpec,
    predictions: &[PredictionRow],
) -> Result<MetricReport> {
    let preds: Vec<String> = predictions.iter().map(|p| p.prediction.clone()).collect();
    let golds: Vec<String> = predictions.iter().map(|p| p.gold.clone()).collect();
    let mut report = MetricReport {
        metrics: BTreeMap::new(),
        n_examples: predictions.len(),
    };
    for id in &task.metric_set {
        let value = match id.as_str() {
            "macro_f1" => {
                let mapped_preds: Vec<String> = preds
                    .iter()
                    .map(|p| map_to_label(p, &task.label_set))
                    .collect();
                let mapped_golds: Vec<String> = golds
                    .iter()
                    .map(|g| map_to_label(g, &task.label_set))
                    .collect();
                metrics::macro_f1(&mapped_preds, &mapped_golds, &task.label_set)?
            }
            _ => {
                metrics::compute_report(std::slice::from_ref(id), &task.label_set, &preds, &golds)?
                    .get(id)
                    .unwrap()
            }
        };
        report.metrics.insert(id.clone(), value);
    }
    Ok(report)
}

/// Accuracy restricted to test queries whose text appears under multiple
/// test users with different golds. None when the dataset has no such
/// queries.
pub fn conflict_accuracy(ds: &Dataset, predictions: &[PredictionRow]) -> Option<f64> {
    let conflicts = ds.conflict_queries();
    if conflicts.is_empty() {
        return None;
    }
    let scored: Vec<&PredictionRow> = predictions
        .iter()
        .filter(|p| conflicts.contains(&p.query))
        .collect();
    if scored.is_empty() {
        return None;
    }
    let hits = scored
        .iter()
        .filter(|p| metrics::normalize(&p.prediction) == metrics::normalize(&p.gold))
        .count();
    Some(hits as f64 / scored.len() as f64)
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

/// Prompt-only baselines: zero-shot, random in-context items, BM25
/// retrieval, or profile-augmented prompting. One deterministic generation
/// per test query.
pub fn run_baseline(
    cfg: &RunConfig,
    ds: &Dataset,
    client: &LlmClient,
) -> Result<Vec<PredictionRow>> {
    if !cfg.mode.is_baseline() {
        return Err(HydraError::Config(format!(
            "run_baseline called with non-baseline mode {:?}",
            cfg.mode
        )));
    }
    let seed = derive_seed(cfg.seed, "baseline");
    let mut predictions = Vec::new();
    for user in &ds.test_users {
        let items: Vec<crate::datamodel::HistoryItem> = match cfg.mode {
            Mode::ZeroShot => Vec::new(),
            Mode::IclRandom => {
                let take = cfg.rerank.k.min(user.history.len());
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("icl:{}", user.user_id)));
                let mut picked: Vec<usize> =
                    sample_indices(&mut rng, user.history.len(), take).into_vec();
                picked.sort_unstable();
                picked
                    .into_iter()
                    .map(|i| user.history[i].clone())
                    .collect()
            }
            Mode::Rag | Mode::Pag => {
                let index = build_index(&user.history, Tokenizer::default());
                retrieve_top(&index, &user.query, cfg.rerank.k, &[])
                    .into_iter()
                    .map(|(ord, _)| user.history[ord].clone())
                    .collect()
            }
            _ => unreachable!(),
        };

        let mut prompt = build_rag_prompt(&ds.task, &items, &user.query).aip;
        if cfg.mode == Mode::Pag {
            let summary_prompt = build_pag_summary_prompt(&ds.task, &user.history)?;
            let summary = client.generate(&GenerationRequest {
                prompt: summary_prompt,
                n_samples: 1,
                temperature: 0.0,
                max_tokens: cfg.adapter.max_tokens,
                seed: derive_seed(seed, &format!("pag:{}", user.user_id)),
            })?;
            prompt = format!("{}\n{prompt}", summary[0]);
        }

        let generated = client.generate(&GenerationRequest {
            prompt,
            n_samples: 1,
            temperature: 0.0,
            max_tokens: cfg.adapter.max_tokens,
            seed: derive_seed(seed, &format!("gen:{}", user.user_id)),
        })?;
        predictions.push(PredictionRow {
            user_id: user.user_id.clone(),
            query: user.query.clone(),
            prediction: generated[0].clone(),
            gold: user.gold.clone(),
        });
    }
    Ok(predictions)
}

/// Everything the learned pipeline leaves behind.
pub struct HydraRunOutput {
    pub reranker_model: Option<FactorizedModel>,
    pub adapter_model: Option<FactorizedModel>,
    pub predictions: Vec<PredictionRow>,
    pub report: MetricReport,
}

/// The learned pipeline in phase order. Reranker: datagen, joint training,
/// frozen-base head fitting, reranking. Adapter: datagen through the
/// reranked context, joint training, head fitting, best-of-b inference.
/// Audit artifacts land in `cfg.out_dir` as each phase finishes.
pub fn run_hydra(cfg: &RunConfig, ds: &Dataset, client: &LlmClient) -> Result<HydraRunOutput> {
    if cfg.mode.is_baseline() {
        return Err(HydraError::Config(format!(
            "run_hydra called with baseline mode {:?}",
            cfg.mode
        )));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let use_reranker = cfg.mode != Mode::HydraAdapterOnly;
    let use_adapter = cfg.mode != Mode::HydraRerankerOnly;
    // Timing goes to the log, not to a file, so artifacts stay
    // byte-identical across runs.
    let mut stopwatch = std::time::Instant::now();
    let mut phase_done = move |name: &str| {
        log::info!("phase {name}: {:?}", stopwatch.elapsed());
        stopwatch = std::time::Instant::now();
    };

    // -- Reranker component ------------------------------------------------
    let reranker_model = if use_reranker {
        let train_examples = reranker_training_data(ds, client, cfg)?;
        write_jsonl(
            &cfg.out_dir.join("reranker_train_examples.jsonl"),
            &train_examples,
        )?;
        phase_done("reranker.datagen");

        let mut model = train_component_model(
            train_examples.into_iter().map(|e| (e.user_id, e.x, e.y)),
            cfg.ablation.no_personal_reranker,
            cfg.encoder,
            &cfg.reranker_train,
            derive_seed(cfg.seed, "reranker.init"),
            derive_seed(cfg.seed, "reranker.train"),
        )?;
        phase_done("reranker.train");

        let fit_examples = reranker_fit_data(ds, client, cfg)?;
        write_jsonl(
            &cfg.out_dir.join("reranker_fit_examples.jsonl"),
            &fit_examples,
        )?;
        fit_test_heads(
            &mut model,
            &with_all_users(group_reranker_examples(&fit_examples), &ds.test_users),
            cfg.ablation.no_personal_reranker,
            &cfg.reranker_train,
        )?;
        phase_done("reranker.fit");
        Some(model)
    } else {
        None
    };

    // Reranked context for every test query, for audit and for the
    // reranker-only mode.
    if let Some(model) = &reranker_model {
        let rows = rerank_scored_rows(ds, model, cfg.ablation.no_personal_reranker, &cfg.rerank)?;
        write_jsonl(&cfg.out_dir.join("reranked.jsonl"), &rows)?;
    }

    let selector = match &reranker_model {
        Some(model) => {
            ContextSelector::reranked(model, cfg.ablation.no_personal_reranker, cfg.rerank)
        }
        None => ContextSelector::bm25(cfg.rerank),
    };

    // -- Reranker-only inference -------------------------------------------
    if !use_adapter {
        let seed = derive_seed(cfg.seed, "reranker.infer");
        let mut predictions = Vec::new();
        for user in &ds.test_users {
            let items = selector.select(user, &user.query, None)?;
            let generated = client.generate(&GenerationRequest {
                prompt: build_rag_prompt(&ds.task, &items, &user.query).aip,
                n_samples: 1,
                temperature: 0.0,
                max_tokens: cfg.adapter.max_tokens,
                seed: derive_seed(seed, &user.user_id),
            })?;
            predictions.push(PredictionRow {
                user_id: user.user_id.clone(),
                query: user.query.clone(),
                prediction: generated[0].clone(),
                gold: user.gold.clone(),
            });
        }
        write_jsonl(&cfg.out_dir.join("predictions.jsonl"), &predictions)?;
        let report = evaluate_predictions(&ds.task, &predictions)?;
        return Ok(HydraRunOutput {
            reranker_model,
            adapter_model: None,
            predictions,
            report,
        });
    }

    // -- Adapter component ---------------------------------------------------
    let train_examples = adapter_training_data(ds, client, &selector, cfg)?;
    write_jsonl(
        &cfg.out_dir.join("adapter_train_examples.jsonl"),
        &train_examples,
    )?;
    phase_done("adapter.datagen");

    let mut adapter_model = train_component_model(
        train_examples.into_iter().map(|e| (e.user_id, e.x, e.y)),
        cfg.ablation.no_personal_adapter,
        cfg.encoder,
        &cfg.adapter_train,
        derive_seed(cfg.seed, "adapter.init"),
        derive_seed(cfg.seed, "adapter.train"),
    )?;
    phase_done("adapter.train");

    let fit_examples = adapter_fit_data(ds, client, &selector, cfg)?;
    write_jsonl(
        &cfg.out_dir.join("adapter_fit_examples.jsonl"),
        &fit_examples,
    )?;
    fit_test_heads(
        &mut adapter_model,
        &with_all_users(group_adapter_examples(&fit_examples), &ds.test_users),
        cfg.ablation.no_personal_adapter,
        &cfg.adapter_train,
    )?;
    phase_done("adapter.fit");

    let (gen_rows, predictions) = adapter_inference(ds, client, &selector, &adapter_model, cfg)?;
    write_jsonl(&cfg.out_dir.join("generations.jsonl"), &gen_rows)?;
    write_jsonl(&cfg.out_dir.join("predictions.jsonl"), &predictions)?;
    phase_done("adapter.infer");

    let report = evaluate_predictions(&ds.task, &predictions)?;
    Ok(HydraRunOutput {
        reranker_model,
        adapter_model: Some(adapter_model),
        predictions,
        report,
    })
}

/// Prepare the dataset, run the configured mode, and write the metric
/// report (text and JSON) into the output directory.
pub fn run(cfg: &RunConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let ds = prepare_dataset(cfg)?;
    run_on_dataset(cfg, &ds)
}

/// [`run`] against an already prepared dataset.
pub fn run_on_dataset(cfg: &RunConfig, ds: &Dataset) -> Result<MetricReport> {
    cfg.validate()?;
    ds.validate()?;
    if ds.test_users.is_empty() {
        return Err(HydraError::Data("no test users to evaluate".into()));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let client = build_client(cfg, &ds.task)?;

    let (report, predictions) = if cfg.mode.is_baseline() {
        let predictions = run_baseline(cfg, ds, &client)?;
        write_jsonl(&cfg.out_dir.join("predictions.jsonl"), &predictions)?;
        (evaluate_predictions(&ds.task, &predictions)?, predictions)
    } else {
        let output = run_hydra(cfg, ds, &client)?;
        (output.report, output.predictions)
    };

    if let Some(conflict) = conflict_accuracy(ds, &predictions) {
        log::info!("conflict-query accuracy: {conflict:.4}");
    }
    std::fs::write(cfg.out_dir.join("report.txt"), report.to_text())?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| HydraError::Data(format!("failed to serialize report: {e}")))?;
    std::fs::write(cfg.out_dir.join("report.json"), json)?;
    Ok(report)
}
