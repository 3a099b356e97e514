//! Retrieve-then-rerank in five steps: candidate construction, LLM
//! labeling, joint training, frozen-base head fitting, and top-k selection
//! by usefulness.
//!
//! Run: `cargo run -p hydra --example reranker_pipeline`

use std::collections::BTreeMap;

use hydra::datamodel::{HistoryItem, TaskId, TaskSpec, UserRecord};
use hydra::llm::Simulator;
use hydra::model::{FactorizedModel, TextEncoderConfig, TrainConfig};
use hydra::reranker::{
    expected_candidate_count, gen_history_candidates, gen_reranker_candidates, label_candidates,
    rerank_scored, train_reranker, RerankConfig,
};

fn user(id: &str, pref: &str) -> UserRecord {
    let anti = if pref == "A" { "B" } else { "A" };
    let history = (0..8)
        .map(|i| {
            // Two of eight items carry the off-preference label; a useful
            // reranker learns to prefer consistent items. They share topic
            // words, so BM25 alone cannot tell them apart.
            let answer = if i % 4 == 3 { anti } else { pref };
            HistoryItem {
                item_id: format!("{id}-h{i}"),
                query_text: format!("weekly chess digest number {i}"),
                answer_text: answer.to_string(),
            }
        })
        .collect();
    UserRecord {
        user_id: id.to_string(),
        query: "assign a label to this weekly chess digest".to_string(),
        gold: pref.to_string(),
        history,
    }
}

fn main() {
    let task = TaskSpec::for_task(TaskId::Synthetic);
    let cfg = RerankConfig { m: 3, n: 8, k: 3 };
    let train_user = user("trainer", "A");

    // 1. Candidate construction: the main query with its top-M retrieved
    //    items, plus M sampled pseudo-queries with their own retrievals.
    let candidates = gen_reranker_candidates(&train_user, &cfg, 1);
    println!(
        "built {} candidates (closed form says {})",
        candidates.len(),
        expected_candidate_count(train_user.history.len(), cfg.m)
    );

    // 2. LLM labeling: ask the backend with exactly one candidate item in
    //    the prompt and compare the answer to the gold. The echo oracle
    //    answers every query with "A", so candidates whose gold is "A" get
    //    y=1 and the off-preference pseudo-queries get y=0.
    let mut answers = BTreeMap::new();
    answers.insert(
        "assign a label to this weekly chess digest".to_string(),
        "A".to_string(),
    );
    for item in &train_user.history {
        answers.insert(item.query_text.clone(), "A".to_string());
    }
    let backend = Simulator::echo(answers);
    let examples = label_candidates("trainer", &candidates, &task, &backend, 1.0, 0.5, 5).unwrap();
    let positives = examples.iter().filter(|e| e.y == 1).count();
    println!("labeled {} examples, {positives} positive", examples.len());
    println!("sample input: {}", examples[0].x);

    // 3. Joint training of the shared base and the trainer's head.
    let mut model = FactorizedModel::new(
        TextEncoderConfig {
            hash_dim: 512,
            hidden_dim: 16,
            ngram_max: 2,
        },
        9,
    )
    .unwrap();
    let train_cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 6,
        batch_size: 8,
        clip: None,
    };
    let losses = train_reranker(&mut model, &examples, &train_cfg, 2).unwrap();
    println!(
        "training losses: first {:.3} -> last {:.3}",
        losses.first().unwrap(),
        losses.last().unwrap()
    );

    // 4. A new test user arrives: fit a fresh head on their history alone,
    //    base frozen.
    let test_user = user("newcomer", "A");
    let fit_candidates = gen_history_candidates(&test_user, &cfg, 3);
    let fit_examples =
        label_candidates("newcomer", &fit_candidates, &task, &backend, 1.0, 0.5, 6).unwrap();
    let pairs: Vec<(String, u8)> = fit_examples.into_iter().map(|e| (e.x, e.y)).collect();
    let base_before = model.base_bytes();
    model.fit_new_head("newcomer", &pairs, &train_cfg).unwrap();
    println!(
        "fitted newcomer head; base unchanged = {}",
        model.base_bytes() == base_before
    );

    // 5. Usefulness top-k: BM25 finds relevant items, the head reorders
    //    them by usefulness.
    let selected = rerank_scored(
        &model,
        "newcomer",
        &test_user.query,
        &test_user.history,
        &cfg,
        &[],
    )
    .unwrap();
    println!("\nreranked top-{}:", cfg.k);
    for s in &selected {
        let item = &s.item;
        println!(
            "  score {:.3} (bm25 rank {})  {} -> {}",
            s.score, s.bm25_rank, item.item_id, item.answer_text
        );
    }
}
