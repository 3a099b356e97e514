//! Best-of-b rejection sampling.
//!
//! The black-box LLM proposes `b` candidates; a per-user head scores each
//! (query, candidate) pair and the best one becomes the answer. A head
//! fitted on the user's history picks their preferred label even though
//! the sampler is indifferent.
//!
//! Run: `cargo run -p hydra --example adapter_best_of_b`

use hydra::adapter::{
    best_of_b, gen_adapter_candidates, label_adapter_examples, sample_generations,
    score_generations, select_best, train_adapter, AdapterConfig, AdapterExample,
};
use hydra::datamodel::{HistoryItem, TaskId, TaskSpec, UserRecord};
use hydra::llm::{Simulator, SimulatorBehavior};
use hydra::model::{FactorizedModel, TextEncoderConfig, TrainConfig};

fn main() {
    let task = TaskSpec::for_task(TaskId::Synthetic);
    let user = UserRecord {
        user_id: "u1".into(),
        query: "assign a label to this weekly digest".into(),
        gold: "B".into(),
        history: (0..10)
            .map(|i| HistoryItem {
                item_id: format!("h{i}"),
                query_text: format!("weekly digest number {i}"),
                answer_text: "B".into(),
            })
            .collect(),
    };

    // Candidate set for adapter training: main query plus history pairs.
    let pairs = gen_adapter_candidates(&user);
    println!("adapter candidates: {} (1 + |history|)", pairs.len());

    // Sample b responses per pair from an indifferent proposal generator.
    let backend = Simulator::new(SimulatorBehavior::LabelSampler {
        labels: vec!["A".into(), "B".into()],
        icl_weight: 0.0,
    });
    let adapter_cfg = AdapterConfig {
        b: 8,
        temperature: 1.0,
        max_tokens: 16,
    };
    let mut examples: Vec<AdapterExample> = Vec::new();
    for (i, (query, gold)) in pairs.iter().enumerate() {
        let gens = sample_generations(
            query,
            &user.history,
            &adapter_cfg,
            &backend,
            &task,
            i as u64,
        )
        .unwrap();
        examples.extend(label_adapter_examples(
            &user.user_id,
            query,
            gold,
            &gens,
            &task,
            0.5,
        ));
    }
    let positives = examples.iter().filter(|e| e.y == 1).count();
    println!(
        "labeled {} (query, generation) pairs; {positives} match the user's answers",
        examples.len()
    );

    // Train the scorer.
    let mut model = FactorizedModel::new(
        TextEncoderConfig {
            hash_dim: 512,
            hidden_dim: 16,
            ngram_max: 2,
        },
        17,
    )
    .unwrap();
    let losses = train_adapter(
        &mut model,
        &examples,
        &TrainConfig {
            learning_rate: 0.1,
            epochs: 6,
            batch_size: 16,
            clip: None,
        },
        4,
    )
    .unwrap();
    println!(
        "training losses: first {:.3} -> last {:.3}\n",
        losses.first().unwrap(),
        losses.last().unwrap()
    );

    // Inference: sample b candidates for the real query and keep the best.
    let gens = sample_generations(
        &user.query,
        &user.history,
        &adapter_cfg,
        &backend,
        &task,
        99,
    )
    .unwrap();
    let scores = score_generations(&model, &user.user_id, &user.query, &gens).unwrap();
    println!("candidates and scores:");
    for (g, s) in gens.iter().zip(&scores) {
        println!("  {s:.3}  {g}");
    }
    let picked = best_of_b(&model, &user.user_id, &user.query, &gens).unwrap();
    println!("chosen: {picked:?} (gold is {:?})", user.gold);

    // Ties resolve to the earliest sample, and any strictly increasing
    // transform of the scores picks the same candidate.
    let doubled: Vec<f64> = scores.iter().map(|s| s * 2.0 + 1.0).collect();
    println!(
        "argmax stable under monotone transforms: {}",
        select_best(&scores) == select_best(&doubled)
    );
}
